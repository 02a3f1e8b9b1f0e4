// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,3,7] [--cache DIR]
//
// Trained models are shared between criteria. With --cache they are saved to
// (and reused from) DIR, which keeps reruns of single criteria cheap.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "arae/evalsuite.hpp"
#include "arae/gradcheck.hpp"
#include "arae/latent.hpp"
#include "arae/training.hpp"
#include "run_config.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace arae;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// --- shared data and models -----------------------------------------------------------

constexpr std::size_t kSeeds = 3;

struct EpochStats {
  std::size_t epoch = 0;
  double c_norm = 0, cg_norm = 0, gap1 = 0, gap2 = 0;
};

struct Trained {
  Bundle bundle;
  double train_seconds = 0;
  std::vector<EpochStats> epochs;
};

class Workspace {
 public:
  explicit Workspace(std::optional<fs::path> cache) : cache_(std::move(cache)) {
    cfg_ = cli::preset("text-desk");
    SeededRng r(cfg_.data_seed);
    train_ = data::synth_corpus("sentiment", cfg_.synth_size, r);
    SeededRng h(cfg_.data_seed + 1);
    heldout_ = data::synth_corpus("sentiment", 2000, h);
    if (cache_) fs::create_directories(*cache_);
  }

  const cli::RunConfig& config() const { return cfg_; }
  const data::SynthCorpus& train() const { return train_; }
  const data::SynthCorpus& heldout() const { return heldout_; }
  std::size_t decode_len() const { return 2 * cfg_.max_len; }

  /// "arae", "ae" or "transfer".
  Trained& model(const std::string& kind, std::uint64_t seed) {
    const std::string key = kind + "-" + std::to_string(seed);
    if (auto it = models_.find(key); it != models_.end()) return it->second;
    auto c = cfg_;
    c.train.seed = seed;
    if (kind == "ae") {
      c.train.lambda1 = 0;
      c.train.gan_loops = 0;
      c.train.gan_loop_epochs.clear();
    } else if (kind == "transfer") {
      c.train.transfer = true;
    }
    Trained t;
    if (cache_ && fs::exists(*cache_ / (key + ".ckpt"))) {
      t.bundle = load_checkpoint(*cache_ / (key + ".ckpt")).bundle;
      const auto j = json::parse(std::ifstream(*cache_ / (key + ".json")));
      t.train_seconds = j.at("train_seconds");
      for (const auto& e : j.at("epochs")) {
        t.epochs.push_back({e.at("epoch"), e.at("c_norm"), e.at("cg_norm"), e.at("gap1"), e.at("gap2")});
      }
      std::printf("# %s loaded from cache\n", key.c_str());
    } else {
      t = train_model(key, c);
    }
    return models_.emplace(key, std::move(t)).first->second;
  }

  /// Encoder codes of the training corpus against as many generator codes.
  EpochStats code_stats_now(const Bundle& b, std::size_t epoch) const {
    const auto codes = encode_all(b, train_.corpus.sequences);
    SeededRng z_rng(1234);
    const auto g = generate_codes(b, z_rng.normal_tensor<float>(Shape{codes.rows(), b.arch().z_dim}));
    const auto gaps = eval::moment_diagnostics(codes, g);
    return {epoch, code_stats(codes).mean_norm, code_stats(g).mean_norm, gaps[0], gaps[1]};
  }

 private:
  Trained train_model(const std::string& key, const cli::RunConfig& c) {
    Trained t;
    t.bundle = Bundle(c.arch(train_.vocab.size(), 0), c.train.seed);
    const bool gan = c.train.lambda1 > 0;
    double hook_seconds = 0;
    TrainHooks hooks;
    hooks.on_epoch = [&](std::size_t epoch, Trainer& tr) {
      const auto t0 = Clock::now();
      if (gan) {
        t.epochs.push_back(code_stats_now(tr.bundle(), epoch));
        const auto& e = t.epochs.back();
        std::printf("# %s epoch %zu l_rec %.3f c_norm %.3f cg_norm %.3f gap1 %.4f gap2 %.4f\n", key.c_str(), epoch,
                    tr.last_rec_loss(), e.c_norm, e.cg_norm, e.gap1, e.gap2);
      } else {
        std::printf("# %s epoch %zu l_rec %.3f\n", key.c_str(), epoch, tr.last_rec_loss());
      }
      std::fflush(stdout);
      hook_seconds += seconds_since(t0);
    };
    const auto t0 = Clock::now();
    run_training(t.bundle, TrainData{&train_.corpus, nullptr}, c.train, hooks);
    t.train_seconds = seconds_since(t0) - hook_seconds;
    std::printf("# %s trained in %.1f s\n", key.c_str(), t.train_seconds);
    if (cache_) {
      save_checkpoint(t.bundle, *cache_ / (key + ".ckpt"), train_.vocab.hash());
      json j{{"train_seconds", t.train_seconds}, {"epochs", json::array()}};
      for (const auto& e : t.epochs) {
        j["epochs"].push_back(
            {{"epoch", e.epoch}, {"c_norm", e.c_norm}, {"cg_norm", e.cg_norm}, {"gap1", e.gap1}, {"gap2", e.gap2}});
      }
      std::ofstream(*cache_ / (key + ".json")) << j.dump(1);
    }
    return t;
  }

  std::optional<fs::path> cache_;
  cli::RunConfig cfg_;
  data::SynthCorpus train_, heldout_;
  std::map<std::string, Trained> models_;
};

data::Tokens content(const data::Tokens& s) {
  return data::Tokens(s.begin(), s.end() - (!s.empty() && s.back() == data::kEos ? 1 : 0));
}

double exact_reconstruction(const Bundle& b, std::span<const data::Tokens> seqs, std::size_t max_len) {
  const auto dec = decode_greedy(b, encode_all(b, seqs), max_len);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) ok += dec[i] == content(seqs[i]);
  return static_cast<double>(ok) / static_cast<double>(seqs.size());
}

std::vector<std::int32_t> ids_of(const data::Vocabulary& v, const std::vector<std::string>& words) {
  std::vector<std::int32_t> out;
  for (const auto& w : words) out.push_back(v.index(w));
  return out;
}

bool contains_any(const data::Tokens& t, const std::vector<std::int32_t>& ids) {
  return std::any_of(t.begin(), t.end(), [&](auto x) { return std::find(ids.begin(), ids.end(), x) != ids.end(); });
}

Tensor gather_rows_of(const Tensor& z, const std::vector<std::size_t>& idx) {
  Tensor g(Shape{idx.size(), z.cols()});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(z.raw() + idx[r] * z.cols(), z.raw() + (idx[r] + 1) * z.cols(), g.raw() + r * z.cols());
  }
  return g;
}

// --- AC1 -------------------------------------------------------------------------------

Outcome ac1_gradients() {
  const auto t0 = Clock::now();
  SeededRng rng(101);
  std::vector<std::pair<std::string, double>> worst;
  auto over_points = [&](const std::string& name, const std::function<double()>& one) {
    double w = 0;
    for (int p = 0; p < 100; ++p) w = std::max(w, one());
    worst.emplace_back(name, w);
  };
  auto randn = [&](std::size_t r, std::size_t c) { return rng.normal_tensor<double>(Shape{r, c}); };
  // Random linear read-out so no output coordinate has a symmetric gradient.
  auto readout = [](Tape<double>& t, Var<double> y, const Tensor64& w) { return sum(mul(y, t.constant(w))); };

  auto binary = [&](const std::string& name, std::size_t ar, std::size_t ac, std::size_t br, std::size_t bc,
                    std::size_t orr, std::size_t oc,
                    std::function<Var<double>(Var<double>, Var<double>)> op) {
    over_points(name, [&] {
      const auto a = randn(ar, ac), b = randn(br, bc), w = randn(orr, oc);
      const double ea =
          grad_check([&](Tape<double>& t, Var<double> x) { return readout(t, op(x, t.constant(b)), w); }, a);
      const double eb =
          grad_check([&](Tape<double>& t, Var<double> x) { return readout(t, op(t.constant(a), x), w); }, b);
      return std::max(ea, eb);
    });
  };
  auto unary = [&](const std::string& name, std::size_t r, std::size_t c, std::size_t orr, std::size_t oc,
                   std::function<Var<double>(Tape<double>&, Var<double>)> op) {
    over_points(name, [&] {
      const auto x = randn(r, c), w = randn(orr, oc);
      return grad_check([&](Tape<double>& t, Var<double> v) { return readout(t, op(t, v), w); }, x);
    });
  };

  binary("matmul", 3, 4, 4, 2, 3, 2, [](auto a, auto b) { return matmul(a, b); });
  binary("matmul_bt", 3, 4, 2, 4, 3, 2, [](auto a, auto b) { return matmul_bt(a, b); });
  binary("add", 3, 4, 3, 4, 3, 4, [](auto a, auto b) { return add(a, b); });
  binary("add_row_broadcast", 3, 4, 1, 4, 3, 4, [](auto a, auto b) { return add(a, b); });
  binary("sub", 3, 4, 3, 4, 3, 4, [](auto a, auto b) { return sub(a, b); });
  binary("mul", 3, 4, 3, 4, 3, 4, [](auto a, auto b) { return mul(a, b); });
  binary("concat_cols", 3, 2, 3, 3, 3, 5, [](auto a, auto b) { return concat_cols(a, b); });
  unary("scale", 3, 4, 3, 4, [](auto&, auto x) { return scale(x, -1.7); });
  unary("add_scalar", 3, 4, 3, 4, [](auto&, auto x) { return add_scalar(x, 0.3); });
  unary("scale_grad", 3, 4, 3, 4, [](auto&, auto x) { return scale_grad(x, 1.0); });
  unary("tanh", 3, 4, 3, 4, [](auto&, auto x) { return tanh(x); });
  unary("sigmoid", 3, 4, 3, 4, [](auto&, auto x) { return sigmoid(x); });
  unary("relu", 3, 4, 3, 4, [](auto&, auto x) { return relu(x); });
  unary("sum", 3, 4, 1, 1, [](auto&, auto x) { return sum(x); });
  unary("mean", 3, 4, 1, 1, [](auto&, auto x) { return mean(x); });
  unary("slice_cols", 3, 5, 3, 2, [](auto&, auto x) { return slice_cols(x, 1, 2); });
  unary("l2_normalize_rows", 3, 4, 3, 4, [](auto&, auto x) { return l2_normalize_rows(x); });
  {
    const std::int32_t ids[] = {2, 0, 2, 4};
    unary("gather_rows", 5, 3, 4, 3, [&](auto&, auto x) { return gather_rows(x, std::span<const std::int32_t>(ids)); });
    const std::int32_t targets[] = {1, 0, 3};
    unary("softmax_cross_entropy", 3, 4, 1, 1,
          [&](auto&, auto x) { return softmax_cross_entropy(x, std::span<const std::int32_t>(targets)); });
    const double weights[] = {1.0, 0.0, 0.5};
    unary("weighted_softmax_nll", 3, 4, 1, 1, [&](auto&, auto x) {
      return weighted_softmax_nll(x, std::span<const std::int32_t>(targets), std::span<const double>(weights));
    });
  }
  {
    const std::uint8_t mask[] = {1, 0, 1};
    binary("where_rows", 3, 4, 3, 4, 3, 4,
           [&](auto a, auto b) { return where_rows(std::span<const std::uint8_t>(mask), a, b); });
  }
  over_points("sigmoid_bce", [&] {
    auto targets = randn(3, 4);
    for (auto& v : targets.data()) v = v > 0 ? 1.0 : 0.0;
    return grad_check([&](Tape<double>&, Var<double> x) { return sigmoid_bce(x, targets); }, randn(3, 4));
  });
  over_points("batch_norm", [&] {
    const auto x = randn(5, 3), g = randn(1, 3).reshaped(Shape{3}), b = randn(1, 3).reshaped(Shape{3});
    const auto w = randn(5, 3);
    const double ex = grad_check(
        [&](Tape<double>& t, Var<double> v) { return readout(t, batch_norm(v, t.constant(g), t.constant(b), 1e-5), w); },
        x);
    const double eg = grad_check(
        [&](Tape<double>& t, Var<double> v) { return readout(t, batch_norm(t.constant(x), v, t.constant(b), 1e-5), w); },
        g);
    const double eb = grad_check(
        [&](Tape<double>& t, Var<double> v) { return readout(t, batch_norm(t.constant(x), t.constant(g), v, 1e-5), w); },
        b);
    return std::max({ex, eg, eb});
  });

  // Full losses: 100 random parameter coordinates each.
  auto text_arch = test::tiny_text_arch();
  text_arch.num_classes = 2;
  text_arch.decoder_heads = 2;
  ModelBundle<double> tm(text_arch, 11);
  const std::vector<data::Tokens> seqs{{5, 6, 7, data::kEos}, {8, data::kEos}, {4, 4, 6, 5, 7, data::kEos}};
  const int labels[] = {0, 1, 1};
  const auto batch = data::make_batch(seqs, labels);
  auto join = [](std::initializer_list<nn::ParamList<double>> parts) {
    nn::ParamList<double> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };
  const auto ae_params = join({tm.encoder_params(), tm.decoder_params()});
  worst.emplace_back("L_rec text", grad_check_params(
                                       [&](Tape<double>& t) { return decoder_nll(t, tm, encode(t, tm, batch), batch, 1); },
                                       ae_params, 100, rng));
  worst.emplace_back("L_rec text (codes)",
                     grad_check([&](Tape<double>& t, Var<double> c) { return decoder_nll(t, tm, c, batch); },
                                randn(3, text_arch.code_dim())));

  ModelBundle<double> im(test::tiny_image_arch(), 12);
  data::ImageCorpus images{9, {{1, 0, 1, 1, 0, 0, 1, 0, 1}, {0, 0, 0, 1, 1, 1, 0, 1, 0}}};
  const std::size_t img_idx[] = {0, 1};
  const auto ibatch = data::make_image_batch(images, img_idx);
  const auto im_params = join({im.encoder_params(), im.decoder_params()});
  worst.emplace_back("L_rec image", grad_check_params(
                                        [&](Tape<double>& t) { return image_nll(t, im, encode(t, im, ibatch), ibatch); },
                                        im_params, 100, rng));

  const auto real = randn(4, text_arch.code_dim()), fake = randn(4, text_arch.code_dim());
  const auto critic = tm.critic_params();
  worst.emplace_back("critic loss",
                     grad_check_params([&](Tape<double>& t) { return critic_loss(t, tm, t.constant(real), t.constant(fake)); },
                                       critic, 100, rng));
  const auto z = randn(3, text_arch.z_dim);
  const auto enc_gen = join({tm.encoder_params(), tm.generator_params()});
  worst.emplace_back("L_encs", grad_check_params(
                                   [&](Tape<double>& t) {
                                     auto fake_codes = generate(t, tm, t.constant(z), nn::Mode::Train, false);
                                     return adversarial_loss(t, tm, encode(t, tm, batch), fake_codes, 1.0);
                                   },
                                   enc_gen, 100, rng));
  const int code_labels[] = {0, 1, 1, 0};
  worst.emplace_back("classifier loss",
                     grad_check_params([&](Tape<double>& t) { return classifier_loss(t, tm, t.constant(real), code_labels); },
                                       tm.classifier_params(), 100, rng));
  worst.emplace_back("adversarial classifier loss",
                     grad_check_params(
                         [&](Tape<double>& t) { return flipped_classifier_loss(t, tm, encode(t, tm, batch), labels); },
                         tm.encoder_params(), 100, rng));

  const double secs = seconds_since(t0);
  auto it = std::max_element(worst.begin(), worst.end(), [](auto& a, auto& b) { return a.second < b.second; });
  const bool pass = it->second < 1e-4 && secs < 120;
  return {pass, fmt("%zu checks, worst %s %.2e (limit 1e-4), %.1f s (limit 120 s)", worst.size(), it->first.c_str(),
                    it->second, secs)};
}

// --- AC2 -------------------------------------------------------------------------------

using Snapshot = std::vector<Tensor>;

Snapshot snapshot(const nn::ParamList<float>& ps) {
  Snapshot s;
  for (auto* p : ps) s.push_back(p->value);
  return s;
}

bool identical(const nn::ParamList<float>& ps, const Snapshot& s) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& v = ps[i]->value;
    if (std::memcmp(v.raw(), s[i].raw(), v.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

Outcome ac2_invariants(Workspace& ws) {
  auto c = ws.config().train;
  c.epochs = 2;
  c.transfer = true;
  SeededRng r(ws.config().data_seed);
  const auto synth = data::synth_corpus("sentiment", 2000, r);
  auto arch = ws.config();
  arch.train.transfer = true;
  Bundle b(arch.arch(synth.vocab.size(), 0), c.seed);
  Trainer tr(b, c);

  struct Group {
    const char* name;
    nn::ParamList<float> params;
  };
  std::vector<Group> groups{{"encoder", b.encoder_params()},   {"decoder", b.decoder_params()},
                            {"generator", b.generator_params()}, {"critic", b.critic_params()},
                            {"classifier", b.classifier_params()}};
  std::size_t checks = 0, n_violations = 0;
  std::vector<std::string> violations;
  auto note = [&](std::string v) {
    if (n_violations++ < 5) violations.push_back(std::move(v));
  };
  auto run_phase = [&](const char* phase, std::set<std::string> targets, const std::function<void()>& f) {
    std::vector<Snapshot> before;
    for (const auto& g : groups) before.push_back(snapshot(g.params));
    f();
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (!targets.contains(groups[i].name) && !identical(groups[i].params, before[i])) {
        note(fmt("%s changed during %s", groups[i].name, phase));
      }
    }
    ++checks;
  };
  auto check_codes = [&](const char* phase) {
    const auto& real = tr.last_real_codes();
    for (std::size_t i = 0; i < real.rows(); ++i) {
      double n = 0;
      for (std::size_t j = 0; j < real.cols(); ++j) n += double(real.at(i, j)) * real.at(i, j);
      if (std::abs(std::sqrt(n) - 1.0) > 1e-5) note(fmt("code norm %.7f after %s", std::sqrt(n), phase));
    }
    const auto& fake = tr.last_fake_codes();
    for (float v : fake.data()) {
      if (!(v > -1.0f && v < 1.0f)) note(fmt("generator code %g after %s", double(v), phase));
    }
  };
  // Weights are stored in 32 bits, so eps is too.
  const float eps = static_cast<float>(c.clip_eps);
  auto check_clamp = [&] {
    for (auto* p : b.critic_params()) {
      for (float v : p->value.data()) {
        if (std::abs(v) > eps) note(fmt("critic weight %g outside eps", double(v)));
      }
    }
  };

  std::vector<data::BatchIterator> ae_its;
  for (int a = 0; a < 2; ++a) {
    const auto idx = synth.corpus.indices_with_label(a);
    static std::vector<data::SequenceCorpus> parts(2);
    parts[a] = synth.corpus.subset(idx);
    ae_its.emplace_back(parts[a], c.batch_size, SeededRng(10 + a));
  }
  data::BatchIterator gan_it(synth.corpus, c.batch_size, SeededRng(20));
  auto next_gan = [&] {
    data::SeqBatch out;
    if (!gan_it.next(out)) {
      gan_it.start_epoch();
      gan_it.next(out);
    }
    return out;
  };

  for (std::size_t epoch = 1; epoch <= c.epochs; ++epoch) {
    for (auto& it : ae_its) it.start_epoch();
    const std::size_t loops = c.gan_loops_at(epoch);
    bool more = true;
    while (more) {
      more = false;
      for (std::size_t head = 0; head < 2; ++head) {
        data::SeqBatch batch;
        if (!ae_its[head].next(batch)) continue;
        more = true;
        run_phase("reconstruction", {"encoder", "decoder"}, [&] { tr.phase1(batch, head); });
        check_codes("reconstruction");
        for (std::size_t l = 0; l < loops; ++l) {
          for (std::size_t k = 0; k < c.critic_iters; ++k) {
            const auto real = next_gan();
            run_phase("critic", {"critic"}, [&] { tr.critic_step(real); });
            check_clamp();
          }
          const auto real = next_gan();
          run_phase("encoder/generator", {"encoder", "generator"}, [&] { tr.phase3(real); });
          check_codes("encoder/generator");
        }
        const auto cls_batch = next_gan();
        run_phase("classifier", {"classifier"}, [&] { tr.phase2b(cls_batch); });
        run_phase("adversarial classifier", {"encoder"}, [&] { tr.phase3b(cls_batch); });
        tr.tick_noise();
      }
    }
  }
  std::string detail = fmt("%zu phase updates checked over 2 epochs, %zu violations", checks, n_violations);
  for (const auto& v : violations) detail += "; " + v;
  return {n_violations == 0, detail};
}

// --- AC3 / AC4 -----------------------------------------------------------------------------

Outcome ac3_reconstruction(Workspace& ws) {
  auto& m = ws.model("arae", 1);
  const double acc = exact_reconstruction(m.bundle, ws.train().corpus.sequences, ws.decode_len());
  const bool pass = acc >= 0.95 && m.train_seconds < 600;
  return {pass, fmt("exact greedy reconstruction %.4f of %zu sentences (limit >= 0.95) after %zu epochs, %.1f s "
                    "(limit 600 s)",
                    acc, ws.train().corpus.size(), ws.config().train.epochs, m.train_seconds)};
}

Outcome ac4_moments(Workspace& ws) {
  auto& m = ws.model("arae", 1);
  if (m.epochs.size() < 2) return {false, "per-epoch code statistics missing"};
  const auto& first = m.epochs.front();
  const auto& last = m.epochs.back();
  const double norm_rel = std::abs(last.cg_norm - last.c_norm) / last.c_norm;
  const bool pass = norm_rel <= 0.10 && last.gap1 < 0.25 * first.gap1 && last.gap2 < 0.25 * first.gap2;
  return {pass, fmt("norms c %.4f g %.4f (rel diff %.3f, limit 0.10); gap1 %.4f -> %.4f (ratio %.3f), gap2 %.4f -> "
                    "%.4f (ratio %.3f), limit ratio 0.25",
                    last.c_norm, last.cg_norm, norm_rel, first.gap1, last.gap1, last.gap1 / first.gap1, first.gap2,
                    last.gap2, last.gap2 / first.gap2)};
}

// --- AC5 / AC6 -----------------------------------------------------------------------------

Outcome ac5_noising(Workspace& ws) {
  const std::vector<std::size_t> ks{0, 1, 2, 3, 4};
  std::vector<double> arae(ks.size()), ae(ks.size());
  std::vector<std::size_t> counts(ks.size(), 0);
  const auto& seqs = ws.train().corpus.sequences;
  const std::vector<data::Tokens> sentences(seqs.begin(), seqs.begin() + 1000);
  for (std::uint64_t s = 1; s <= kSeeds; ++s) {
    SeededRng rng(500 + s);
    const auto rows = eval::noising_table(ws.model("arae", s).bundle, ws.model("ae", s).bundle, sentences, ks, rng);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      arae[i] += rows[i].arae_nll / kSeeds;
      ae[i] += rows[i].ae_nll / kSeeds;
      counts[i] = rows[i].sentences;
    }
  }
  std::string table;
  std::optional<std::size_t> crossover;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    table += fmt(" k%zu(n=%zu) %.3f/%.3f", ks[i], counts[i], arae[i], ae[i]);
    if (ks[i] >= 2 && counts[i] >= 500 && arae[i] < ae[i] && !crossover) crossover = ks[i];
  }
  return {crossover.has_value(),
          (crossover ? fmt("crossover at k=%zu;", *crossover) : std::string("no crossover in k=2..4;")) +
              " ARAE/AE NLL over 3 seeds:" + table};
}

Outcome ac6_smoothness(Workspace& ws) {
  double arae = 0, ae = 0;
  for (std::uint64_t s = 1; s <= kSeeds; ++s) {
    SeededRng r1(600 + s), r2(600 + s);
    arae += eval::smoothness_probe(ws.model("arae", s).bundle, ws.train().corpus.sequences, r1).mean_cosine / kSeeds;
    ae += eval::smoothness_probe(ws.model("ae", s).bundle, ws.train().corpus.sequences, r2).mean_cosine / kSeeds;
  }
  return {arae > ae, fmt("mean neighbour cosine ARAE %.4f vs AE %.4f (250 probes x 100 neighbours, 3 seeds)", arae, ae)};
}

// --- AC7 -------------------------------------------------------------------------------------

Outcome ac7_transfer(Workspace& ws) {
  const auto t0 = Clock::now();
  auto& m = ws.model("transfer", 1);
  const double cached_train = m.train_seconds;
  const auto eval_t0 = Clock::now();
  data::SequenceCorpus inputs = ws.heldout().corpus;
  inputs.sequences.resize(1000);
  inputs.labels.resize(1000);
  SeededRng rng(1);
  eval::BowClassifier judge(ws.train().vocab.size(), 2);
  judge.train(ws.train().corpus.sequences, ws.train().corpus.labels, 3, 0.1, rng);
  const double judge_acc = judge.accuracy(inputs.sequences, inputs.labels);
  eval::LmConfig lm;
  const auto real_lm = eval::train_lm(ws.train().corpus.sequences, ws.train().vocab.size(), lm);
  const auto r = eval::transfer_eval(m.bundle, inputs, judge, real_lm, inputs.sequences, lm, ws.decode_len());
  // Training time counts whether the model was trained here or cached.
  const double secs = std::max(seconds_since(t0), cached_train + seconds_since(eval_t0));
  const bool pass = judge_acc >= eval::kJudgeGate && r.transfer >= 0.80 && r.bleu >= 40 && secs < 900;
  return {pass, fmt("transfer %.1f%% (limit 80%%), BLEU %.1f (limit 40), judge %.1f%% (gate 95%%), PPL %.2f, "
                    "reverse PPL %.2f, %.1f s (limit 900 s)",
                    100 * r.transfer, r.bleu, 100 * judge_acc, r.ppl, r.reverse_ppl, secs)};
}

// --- AC8 -------------------------------------------------------------------------------------

Outcome ac8_reverse_ppl(Workspace& ws) {
  const auto& m = ws.model("arae", 1).bundle;
  SeededRng zr(800);
  const auto samples = decode_greedy(m, generate_codes(m, zr.normal_tensor<float>(Shape{5000, m.arch().z_dim})),
                                     ws.decode_len());
  std::vector<data::Tokens> real;
  for (std::size_t i = 0; i < 5000; ++i) real.push_back(content(ws.train().corpus.sequences[i]));
  eval::LmConfig lm;
  const auto& held = ws.heldout().corpus.sequences;
  const auto rr = eval::reverse_ppl(real, held, ws.train().vocab.size(), lm);
  const auto rg = eval::reverse_ppl(samples, held, ws.train().vocab.size(), lm);
  const bool pass = rr.ppl < rg.ppl && rg.distinct_ratio >= 0.10;
  return {pass, fmt("reverse PPL real %.3f < ARAE-GAN %.3f; distinct ratio %.3f over 5000 samples (limit 0.10)", rr.ppl,
                    rg.ppl, rg.distinct_ratio)};
}

// --- AC9 -------------------------------------------------------------------------------------

std::vector<int> subject_labels(const data::SynthCorpus& s) {
  std::vector<int> out;
  for (const auto& line : s.lines) out.push_back(data::sentiment_grammar().subject_class(data::tokenize(line)));
  return out;
}

Outcome ac9_semi_supervised(Workspace& ws) {
  const auto train_labels_all = subject_labels(ws.train());
  const auto test_labels = subject_labels(ws.heldout());
  const std::size_t n_labeled = ws.train().corpus.size() / 20;
  const std::vector<data::Tokens> labeled(ws.train().corpus.sequences.begin(),
                                          ws.train().corpus.sequences.begin() + n_labeled);
  const std::vector<int> labels(train_labels_all.begin(), train_labels_all.begin() + n_labeled);
  eval::SemiSupervisedResult mean;
  std::string per_seed;
  for (std::uint64_t s = 1; s <= kSeeds; ++s) {
    eval::ProbeConfig pc;
    pc.seed = s;
    const auto r = eval::semi_supervised_probe(ws.model("ae", s).bundle, ws.model("arae", s).bundle, labeled, labels,
                                               ws.heldout().corpus.sequences, test_labels, 2, pc);
    mean.supervised += r.supervised / kSeeds;
    mean.ae += r.ae / kSeeds;
    mean.arae += r.arae / kSeeds;
    per_seed += fmt(" [%.3f %.3f %.3f]", r.arae, r.ae, r.supervised);
  }
  const bool pass = mean.arae >= mean.ae && mean.ae >= mean.supervised;
  return {pass, fmt("mean accuracy ARAE %.4f >= AE %.4f >= supervised %.4f with %zu labels (5%%); per seed "
                    "[ARAE AE sup]:",
                    mean.arae, mean.ae, mean.supervised, n_labeled) +
                    per_seed};
}

// --- AC10 ------------------------------------------------------------------------------------

Outcome ac10_latent(Workspace& ws) {
  const auto& m = ws.model("arae", 1).bundle;
  const std::size_t d = m.arch().z_dim;
  SeededRng rng(1000);
  std::size_t endpoint_ok = 0;
  const std::size_t pairs = 20;
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto zz = rng.normal_tensor<float>(Shape{2, d});
    const auto direct = decode_greedy(m, generate_codes(m, zz), ws.decode_len());
    const auto path = latent::interpolate(zz.row(0), zz.row(1), 6);
    const auto a = decode_greedy(m, generate_codes(m, path.front().reshaped(Shape{1, d})), ws.decode_len()).front();
    const auto b = decode_greedy(m, generate_codes(m, path.back().reshaped(Shape{1, d})), ws.decode_len()).front();
    endpoint_ok += a == direct[0] && b == direct[1];
  }

  const auto& g = data::sentiment_grammar();
  const auto from = ids_of(ws.train().vocab, g.adjectives[0]);
  const auto to = ids_of(ws.train().vocab, g.adjectives[1]);
  const auto z = rng.normal_tensor<float>(Shape{5000, d});
  const auto decoded = decode_greedy(m, generate_codes(m, z), ws.decode_len());
  std::vector<std::size_t> src, dst;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    const bool f = contains_any(decoded[i], from), t = contains_any(decoded[i], to);
    if (f && !t) src.push_back(i);
    if (t && !f) dst.push_back(i);
  }
  if (src.size() < 100 || dst.size() < 10) {
    return {false, fmt("too few generated sentences with the lexicons: %zu source, %zu target", src.size(), dst.size())};
  }
  const auto offset = latent::build_offset(gather_rows_of(z, src), gather_rows_of(z, dst));
  std::size_t matched = 0;
  double precision = 0;
  for (std::size_t p = 0; p < 100; ++p) {
    const auto r = latent::apply_offset_and_score(
        m, z.row(src[p]), offset.t, 100, rng, [&](const data::Tokens& s) { return contains_any(s, to); },
        ws.decode_len());
    if (r.match) {
      ++matched;
      precision += r.precision;
    }
  }
  const double match = matched / 100.0;
  const bool pass = endpoint_ok == pairs && match >= 0.5;
  return {pass, fmt("interpolation endpoints %zu/%zu identical; offset good->bad Match %.2f (limit 0.50), "
                    "precision %.3f over 100 probes x 100 samples",
                    endpoint_ok, pairs, match, matched ? precision / matched : 0.0)};
}

// --- AC11 ------------------------------------------------------------------------------------

Outcome ac11_determinism(Workspace& ws) {
  auto c = ws.config().train;
  c.epochs = 2;
  c.log_interval = 5;
  SeededRng r(ws.config().data_seed);
  const auto synth = data::synth_corpus("sentiment", 2000, r);
  const auto arch = ws.config().arch(synth.vocab.size(), 0);
  Bundle a(arch, c.seed), b(arch, c.seed);
  const auto la = run_training(a, TrainData{&synth.corpus, nullptr}, c);
  const auto lb = run_training(b, TrainData{&synth.corpus, nullptr}, c);
  const bool same_log = la.to_jsonl() == lb.to_jsonl() && !la.records.empty();

  test::TempDir dir;
  save_checkpoint(a, dir.path / "m.ckpt", synth.vocab.hash());
  auto loaded = load_checkpoint(dir.path / "m.ckpt");
  bool bit_exact = loaded.vocab_hash == synth.vocab.hash();
  const auto pa = a.all_params(), pl = loaded.bundle.all_params();
  bit_exact = bit_exact && pa.size() == pl.size();
  for (std::size_t i = 0; bit_exact && i < pa.size(); ++i) {
    bit_exact = pa[i]->value.shape() == pl[i]->value.shape() &&
                std::memcmp(pa[i]->value.raw(), pl[i]->value.raw(), pa[i]->value.size() * sizeof(float)) == 0;
  }
  const auto ba = a.buffers(), bl = loaded.bundle.buffers();
  bit_exact = bit_exact && ba.size() == bl.size();
  for (std::size_t i = 0; bit_exact && i < ba.size(); ++i) {
    bit_exact = ba[i].first == bl[i].first &&
                std::memcmp(ba[i].second->raw(), bl[i].second->raw(), ba[i].second->size() * sizeof(float)) == 0;
  }

  auto metrics = [&](const Bundle& m) {
    const auto& seqs = synth.corpus.sequences;
    const auto codes = encode_all(m, seqs);
    const auto nll = sequence_losses(m, codes, seqs);
    SeededRng zr(1100);
    const auto g = generate_codes(m, zr.normal_tensor<float>(Shape{seqs.size(), m.arch().z_dim}));
    const auto gaps = eval::moment_diagnostics(codes, g);
    return std::vector<double>{exact_reconstruction(m, seqs, ws.decode_len()),
                               std::accumulate(nll.begin(), nll.end(), 0.0) / nll.size(), gaps[0], gaps[1]};
  };
  const auto before = metrics(a), after = metrics(loaded.bundle);
  double diff = 0;
  for (std::size_t i = 0; i < before.size(); ++i) diff = std::max(diff, std::abs(before[i] - after[i]));
  const bool pass = same_log && bit_exact && diff <= 1e-6;
  return {pass, fmt("log %s (%zu records); checkpoint %s; reloaded metrics max diff %.2e (limit 1e-6)",
                    same_log ? "identical" : "DIFFERS", la.records.size(), bit_exact ? "bit-exact" : "NOT bit-exact",
                    diff)};
}

// --- AC12 ------------------------------------------------------------------------------------

Outcome ac12_oracles(Workspace& ws) {
  std::vector<std::string> bad;
  auto expect = [&](const char* what, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) bad.push_back(fmt("%s %.10g vs %.10g", what, got, want));
  };

  // Batched, padded loss against one sentence per batch (no padding at all).
  auto arch = ws.config().arch(ws.train().vocab.size(), 0);
  ModelBundle<double> m(arch, 3);
  const std::vector<data::Tokens> seqs(ws.train().corpus.sequences.begin(), ws.train().corpus.sequences.begin() + 16);
  {
    Tape<double> tape;
    SeededRng cr(1200);
    const auto codes = cr.normal_tensor<double>(Shape{seqs.size(), arch.code_dim()}, 0, 0.3);
    const double batched = decoder_nll(tape, m, tape.constant(codes), data::make_batch(seqs)).value().item() *
                           static_cast<double>(seqs.size());
    double single = 0;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      Tape<double> t1;
      const std::vector<data::Tokens> one{seqs[i]};
      single += decoder_nll(t1, m, t1.constant(codes.row(i).reshaped(Shape{1, arch.code_dim()})), data::make_batch(one))
                    .value()
                    .item();
    }
    expect("masked batch loss", batched, single, 1e-5);
  }

  // logits (1, 2, 3), target 2: log(e + e^2 + e^3) - 3.
  {
    Tape<double> t;
    const std::int32_t target[] = {2};
    const auto ce = softmax_cross_entropy(t.constant(Tensor64::matrix({{1, 2, 3}})), std::span<const std::int32_t>(target));
    expect("softmax-CE", ce.value().item(), 0.40760596444438013, 1e-12);
  }

  // a b c d e vs a b c x e: precisions 4/5, 2/4, 1/3, then 1/(2+1) for the empty 4-grams.
  {
    const data::Tokens cand{4, 5, 6, 7, 8}, ref{4, 5, 6, 9, 8};
    expect("BLEU", eval::bleu(cand, ref), 0.4591497693322866, 1e-12);
    expect("BLEU brevity", eval::bleu(data::Tokens{4, 5, 6, 7}, data::Tokens{4, 5, 6, 7, 8, 9}), 0.6065306597126334,
           1e-12);
  }

  // kitten -> sitting: two substitutions and one insertion.
  {
    const data::Tokens kitten{10, 5, 11, 11, 12, 13}, sitting{14, 5, 11, 11, 5, 13, 15};
    expect("edit distance", static_cast<double>(eval::edit_distance(kitten, sitting)), 3.0, 0);
    expect("edit distance to empty", static_cast<double>(eval::edit_distance(kitten, data::Tokens{})), 6.0, 0);
  }

  // An LM with a zeroed output layer is uniform over its 4 tokens: PPL 4.
  {
    eval::LmConfig c;
    c.embed = 3;
    c.hidden = 4;
    eval::LanguageModel lm(4, c);
    lm.out.weight.value.fill(0);
    lm.out.bias.value.fill(0);
    const std::vector<data::Tokens> corpus{{3, 3, data::kEos}, {data::kEos}, {1, 0, 3, data::kEos}};
    expect("uniform LM PPL", eval::perplexity(lm, corpus), 4.0, 1e-5);
  }

  std::string detail = bad.empty() ? "masked loss, softmax-CE, BLEU, edit distance and PPL match" : "mismatch:";
  for (const auto& b : bad) detail += " " + b + ";";
  return {bad.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string only;
  std::string cache;
  app.add_option("--only", only, "comma-separated criterion numbers");
  app.add_option("--cache", cache, "directory for trained models");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  {
    std::stringstream ss(only);
    for (std::string tok; std::getline(ss, tok, ',');) {
      if (!tok.empty()) selected.insert(std::stoi(tok));
    }
  }
  Workspace ws(cache.empty() ? std::nullopt : std::optional<fs::path>(cache));

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient integrity", [] { return ac1_gradients(); }},
      {"training invariants", [&] { return ac2_invariants(ws); }},
      {"reconstruction", [&] { return ac3_reconstruction(ws); }},
      {"distribution matching", [&] { return ac4_moments(ws); }},
      {"noising robustness", [&] { return ac5_noising(ws); }},
      {"smoothness", [&] { return ac6_smoothness(ws); }},
      {"transfer", [&] { return ac7_transfer(ws); }},
      {"reverse PPL ordering", [&] { return ac8_reverse_ppl(ws); }},
      {"semi-supervised ordering", [&] { return ac9_semi_supervised(ws); }},
      {"latent tooling", [&] { return ac10_latent(ws); }},
      {"determinism and persistence", [&] { return ac11_determinism(ws); }},
      {"oracle equivalences", [&] { return ac12_oracles(ws); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("AC%d %s %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
