#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "run_config.hpp"
#include "test_util.hpp"

using namespace arae;
using namespace arae::cli;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "arae");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small enough to train in a few seconds.
const std::vector<std::string> kTiny{"--set", "synth_size=200", "--set", "embed_dim=4",     "--set",
                                     "hidden=8",   "--set",          "z_dim=4",  "--set",   "generator_hidden=8",
                                     "--set",      "critic_hidden=8", "--set",   "classifier_hidden=4"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

class TrainedCli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test::TempDir;
    const auto r = run_cli(with({"train", "--data", "synth", "--epochs", "1", "--out", run_dir().string(), "--set",
                                 "transfer=true"},
                                kTiny));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::filesystem::path run_dir() { return dir_->path / "run"; }
  static std::string ckpt() { return (run_dir() / "epoch1.ckpt").string(); }

  static test::TempDir* dir_;
};

test::TempDir* TrainedCli::dir_ = nullptr;

}  // namespace

TEST(RunConfig, ParsesFileAndRejectsUnknownKeys) {
  test::TempDir dir;
  std::ofstream(dir.path / "c.txt") << "# comment\nepochs = 3\n  lambda1=2.5  \ngenerator_hidden = 7,9\n\n";
  RunConfig c;
  c.load_file(dir.path / "c.txt");
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.train.lambda1, 2.5);
  EXPECT_EQ(c.generator_hidden, (std::vector<std::size_t>{7, 9}));

  try {
    c.set("lamda1", "1");
    ADD_FAILURE();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("lamda1", 0), 0u);
  }
  EXPECT_THROW(c.set("epochs", "three"), ConfigError);
  EXPECT_THROW(c.set("lambda1", "1x"), ConfigError);
}

TEST(RunConfig, TextRoundTripCoversEveryKey) {
  auto c = preset("text-paper");
  c.train.gan_loop_epochs.clear();
  const auto text = c.to_text();
  for (const auto& k : RunConfig::keys()) EXPECT_NE(text.find(k + " = "), std::string::npos) << k;
  test::TempDir dir;
  std::ofstream(dir.path / "c.txt") << text;
  RunConfig back;
  back.load_file(dir.path / "c.txt");
  EXPECT_EQ(back.to_text(), text);
}

TEST(RunConfig, Presets) {
  const auto full = preset("text-paper");
  EXPECT_EQ(full.train.lr_ae, 1.0);
  EXPECT_EQ(full.train.lr_gen, 5e-5);
  EXPECT_EQ(full.train.lr_critic, 1e-5);
  EXPECT_EQ(full.train.critic_iters, 5u);
  EXPECT_EQ(full.hidden, 300u);
  const auto img = preset("image-paper");
  EXPECT_EQ(img.modality(), Modality::Image);
  EXPECT_EQ(img.train.noise_sigma, 0.4);
  EXPECT_EQ(img.image_encoder_hidden, (std::vector<std::size_t>{800, 400}));
  EXPECT_EQ(img.image_decoder_hidden, (std::vector<std::size_t>{400, 800, 1000}));
  EXPECT_NO_THROW(preset("text-desk").validate());
  EXPECT_NO_THROW(preset("image-desk").validate());
  EXPECT_THROW(preset("huge"), ConfigError);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, kExitUsage);
  EXPECT_EQ(run_cli({"bogus"}).code, kExitUsage);
  EXPECT_EQ(run_cli({"--help"}).code, kExitOk);
  test::TempDir dir;
  const auto missing = run_cli({"train", "--data", (dir.path / "nope.txt").string(), "--out", dir.path.string()});
  EXPECT_EQ(missing.code, kExitUsage);
  EXPECT_NE(missing.err.find("data"), std::string::npos);
  const auto bad_key = run_cli({"train", "--set", "epoch=3", "--out", dir.path.string()});
  EXPECT_EQ(bad_key.code, kExitUsage);
  EXPECT_NE(bad_key.err.find("epoch"), std::string::npos);
  EXPECT_EQ(run_cli({"sample", "--checkpoint", (dir.path / "none.ckpt").string()}).code, kExitUsage);
}

TEST(Cli, NumericFailureExitsThree) {
  test::TempDir dir;
  const auto r = run_cli(with({"train", "--epochs", "1", "--out", dir.path.string(), "--set", "lr_ae=1e38", "--set",
                               "grad_clip=1e38", "--set", "synth_size=64"},
                              kTiny));
  EXPECT_EQ(r.code, kExitNumeric) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos);
}

TEST(Cli, LambdaZeroTrainsAutoencoderBaseline) {
  test::TempDir dir;
  const auto r = run_cli(with({"train", "--epochs", "1", "--lambda1", "0", "--out", dir.path.string()}, kTiny));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cfg = slurp(dir.path / "config.txt");
  EXPECT_NE(cfg.find("lambda1 = 0\n"), std::string::npos);
  EXPECT_NE(cfg.find("gan_loops = 0\n"), std::string::npos);
  // The log has no critic activity.
  EXPECT_NE(slurp(dir.path / "train_log.jsonl").find("\"w_est\":0.0"), std::string::npos);
}

TEST_F(TrainedCli, TrainWritesArtifactsAndEchoesConfig) {
  for (const char* f : {"config.txt", "vocab.txt", "epoch1.ckpt", "train_log.jsonl", "codes.bin"})
    EXPECT_TRUE(std::filesystem::exists(run_dir() / f)) << f;
  EXPECT_NE(slurp(run_dir() / "config.txt").find("transfer = true"), std::string::npos);
}

TEST_F(TrainedCli, SampleZeroIsEmptyAndSeedIsDeterministic) {
  const auto zero = run_cli({"sample", "--checkpoint", ckpt(), "--n", "0"});
  EXPECT_EQ(zero.code, 0) << zero.err;
  EXPECT_EQ(zero.out, "");
  const auto a = run_cli({"sample", "--checkpoint", ckpt(), "--n", "20", "--seed", "4"});
  const auto b = run_cli({"sample", "--checkpoint", ckpt(), "--n", "20", "--seed", "4"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 20);
}

TEST_F(TrainedCli, SampleFromCodeGaussian) {
  EXPECT_EQ(run_cli({"sample", "--checkpoint", ckpt(), "--source", "ae-gaussian"}).code, kExitUsage);
  const auto r = run_cli({"sample", "--checkpoint", ckpt(), "--source", "ae-gaussian", "--codes",
                          (run_dir() / "codes.bin").string(), "--n", "5"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 5);
  EXPECT_EQ(run_cli({"sample", "--checkpoint", ckpt(), "--source", "vae"}).code, kExitUsage);
}

TEST_F(TrainedCli, InterpolationEndpointsMatchSamples) {
  const auto path = run_cli({"interpolate", "--checkpoint", ckpt(), "--steps", "4", "--seed", "9"});
  const auto direct = run_cli({"sample", "--checkpoint", ckpt(), "--n", "2", "--seed", "9"});
  ASSERT_EQ(path.code, 0) << path.err;
  std::vector<std::string> p, d;
  std::istringstream ps(path.out), ds(direct.out);
  for (std::string l; std::getline(ps, l);) p.push_back(l);
  for (std::string l; std::getline(ds, l);) d.push_back(l);
  ASSERT_EQ(p.size(), 4u);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(p.front(), d[0]);
  EXPECT_EQ(p.back(), d[1]);
}

TEST_F(TrainedCli, TransferReportsAllMetrics) {
  const auto r = run_cli(with({"transfer", "--checkpoint", ckpt(), "--data", "synth"}, kTiny));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* m : {"transfer", "bleu", "ppl", "reverse_ppl"}) EXPECT_NE(r.out.find(m), std::string::npos) << m;
}

TEST_F(TrainedCli, TransferOfUnlabeledFileNeedsTarget) {
  std::ofstream(dir_->path / "in.txt") << "the good cat sees\n";
  const auto in = (dir_->path / "in.txt").string();
  EXPECT_EQ(run_cli({"transfer", "--checkpoint", ckpt(), "--data", in}).code, kExitUsage);
  const auto r = run_cli({"transfer", "--checkpoint", ckpt(), "--data", in, "--to", "1"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1);
}

TEST_F(TrainedCli, EvalSuites) {
  const auto rec = run_cli(with({"eval", "--checkpoint", ckpt(), "--suite", "reconstruction"}, kTiny));
  EXPECT_EQ(rec.code, 0) << rec.err;
  EXPECT_EQ(run_cli({"eval", "--checkpoint", ckpt(), "--suite", "noising"}).code, kExitUsage);
  const auto noising =
      run_cli(with({"eval", "--checkpoint", ckpt(), "--suite", "noising", "--baseline", ckpt()}, kTiny));
  ASSERT_EQ(noising.code, 0) << noising.err;
  EXPECT_NE(noising.out.find("sentences"), std::string::npos);
  EXPECT_EQ(run_cli({"eval", "--checkpoint", ckpt(), "--suite", "bogus"}).code, kExitUsage);
}

TEST(Cli, ImageCheckpointRejectedForTransfer) {
  test::TempDir dir;
  const auto r = run_cli({"train", "--mode", "image", "--epochs", "1", "--out", dir.path.string(), "--set",
                          "synth_size=64", "--set", "image_side=4", "--set", "image_encoder_hidden=6", "--set",
                          "image_decoder_hidden=6", "--set", "image_code=4", "--set", "z_dim=3", "--set",
                          "generator_hidden=5", "--set", "critic_hidden=5", "--set", "batch_size=16"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = run_cli({"transfer", "--checkpoint", (dir.path / "epoch1.ckpt").string()});
  EXPECT_EQ(t.code, kExitUsage);
  const auto s = run_cli({"sample", "--checkpoint", (dir.path / "epoch1.ckpt").string(), "--n", "2"});
  EXPECT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(std::count(s.out.begin(), s.out.end(), '\n'), 2);
}

TEST(Cli, SynthWritesAttributeFiles) {
  test::TempDir dir;
  const auto r = run_cli({"synth", "--n", "10", "--out", (dir.path / "s").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t lines = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path / "s")) {
    std::ifstream in(e.path());
    for (std::string l; std::getline(in, l);) ++lines;
  }
  EXPECT_EQ(lines, 10u);
  // Loading the directory back labels each file by its sorted position.
  const auto names = data::attribute_names(dir.path / "s");
  ASSERT_EQ(names.size(), 2u);
  for (int label = 0; label < 2; ++label) {
    std::ifstream in(dir.path / "s" / (names[label] + ".txt"));
    for (std::string l; std::getline(in, l);) {
      EXPECT_EQ(data::sentiment_grammar().attribute_of(data::tokenize(l)), label) << l;
    }
  }
}
