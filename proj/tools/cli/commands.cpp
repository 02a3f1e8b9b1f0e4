#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>

#include "arae/data.hpp"
#include "arae/evalsuite.hpp"
#include "arae/latent.hpp"
#include "arae/log.hpp"
#include "arae/training.hpp"
#include "run_config.hpp"

namespace arae::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config, preset, checkpoint, baseline, codes, source = "gan", suite = "all";
  std::string from_words = "good,great,fine", to_words = "bad,awful,poor";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data, out, mode;
  std::optional<double> lambda1, lambda2;
  std::optional<std::size_t> epochs, n, to;
  std::size_t steps = 5, samples = 100, pool = 20000;
};

RunConfig effective_config(const Options& o) {
  RunConfig c = o.preset.empty() ? preset(o.mode.value_or("text") == "image" ? "image-desk" : "text-desk")
                                 : preset(o.preset);
  if (!o.config.empty()) c.load_file(o.config);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("set: expected key=value, got '" + s + "'");
    c.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.mode) c.set("mode", *o.mode);
  if (o.data) c.data = *o.data;
  if (o.out) c.out = *o.out;
  if (o.seed) c.train.seed = *o.seed;
  if (o.lambda1) c.train.lambda1 = *o.lambda1;
  if (o.lambda2) c.train.lambda2 = *o.lambda2;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (c.train.lambda1 == 0 && !c.train.transfer) {
    // AE baseline: reconstruction only.
    c.train.gan_loops = 0;
    c.train.gan_loop_epochs.clear();
  }
  return c;
}

/// Greedy and sampled decodes stop after twice the training length cap.
std::size_t decode_len(const RunConfig& c) { return 2 * c.max_len; }

// --- data ---------------------------------------------------------------------------

struct TextData {
  data::Vocabulary vocab;
  data::SequenceCorpus corpus;
};

TextData synth_text(std::size_t size, std::uint64_t seed) {
  SeededRng rng(seed);
  auto s = data::synth_corpus("sentiment", size, rng);
  return {std::move(s.vocab), std::move(s.corpus)};
}

data::SequenceCorpus load_text(const RunConfig& c, const data::Vocabulary& vocab) {
  if (c.data == "synth") return synth_text(c.synth_size, c.data_seed).corpus;
  if (!fs::exists(c.data)) throw ConfigError("data: no such file or directory: " + c.data);
  return fs::is_directory(c.data) ? data::load_attribute_corpus(c.data, vocab, c.max_len)
                                  : data::load_text_corpus(c.data, vocab, c.max_len);
}

TextData load_training_text(const RunConfig& c) {
  if (c.data == "synth") return synth_text(c.synth_size, c.data_seed);
  const auto lines = data::read_corpus_lines(c.data);
  auto vocab = data::Vocabulary::build(lines, c.min_count);
  auto corpus = load_text(c, vocab);
  return {std::move(vocab), std::move(corpus)};
}

/// Held-out real sentences: a fresh synthetic draw, or the corpus itself.
std::vector<data::Tokens> heldout_text(const RunConfig& c, const data::SequenceCorpus& corpus) {
  if (c.data == "synth") return synth_text(1000, c.data_seed + 1).corpus.sequences;
  return corpus.sequences;
}

data::ImageCorpus load_images(const RunConfig& c) {
  if (c.data == "synth") {
    SeededRng rng(c.data_seed);
    return data::synth_images(c.synth_size, c.image_side, rng);
  }
  return data::load_binary_images(c.data, c.image_side * c.image_side);
}

struct Model {
  Bundle bundle;
  std::optional<data::Vocabulary> vocab;
};

Model load_model(const std::string& path, std::optional<Modality> expect = std::nullopt) {
  if (path.empty()) throw ConfigError("checkpoint: --checkpoint is required");
  if (!fs::exists(path)) throw ConfigError("checkpoint: no such file: " + path);
  auto ck = load_checkpoint(path, expect);
  Model m{std::move(ck.bundle), std::nullopt};
  if (m.bundle.arch().modality == Modality::Text) {
    const auto vocab_path = fs::path(path).parent_path() / "vocab.txt";
    if (!fs::exists(vocab_path)) throw ConfigError("checkpoint: missing " + vocab_path.string());
    m.vocab = data::Vocabulary::load(vocab_path);
    if (ck.vocab_hash != 0 && ck.vocab_hash != m.vocab->hash()) {
      throw ConfigError("checkpoint: " + vocab_path.string() + " does not match the checkpoint vocabulary");
    }
  }
  return m;
}

std::string image_line(const std::vector<std::uint8_t>& bits) {
  std::string s(bits.size(), '0');
  for (std::size_t i = 0; i < bits.size(); ++i) s[i] = bits[i] ? '1' : '0';
  return s;
}

/// One line per code: decoded sentence or thresholded image.
std::vector<std::string> render(const Model& m, const Tensor& codes, std::size_t max_len) {
  std::vector<std::string> lines;
  if (codes.empty() || codes.rows() == 0) return lines;
  if (m.vocab) {
    for (const auto& t : decode_greedy(m.bundle, codes, max_len)) lines.push_back(m.vocab->decode(t));
  } else {
    const auto probs = decode_image(m.bundle, codes);
    const std::size_t p = probs.cols();
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      Tensor row(Shape{1, p});
      std::copy(probs.raw() + r * p, probs.raw() + (r + 1) * p, row.raw());
      lines.push_back(image_line(threshold_image(row)));
    }
  }
  return lines;
}

Tensor sample_z(const Bundle& b, std::size_t n, std::uint64_t seed) {
  SeededRng rng(seed);
  return rng.normal_tensor<float>(Shape{n, b.arch().z_dim});
}

Tensor row(const Tensor& x, std::size_t r) {
  Tensor out(Shape{1, x.cols()});
  std::copy(x.raw() + r * x.cols(), x.raw() + (r + 1) * x.cols(), out.raw());
  return out;
}

void write_lines(const std::vector<std::string>& lines, const std::optional<std::string>& path, std::ostream& out) {
  if (!path) {
    for (const auto& l : lines) out << l << '\n';
    return;
  }
  std::ofstream f(*path, std::ios::binary);
  if (!f) throw IoError("cannot write " + *path);
  for (const auto& l : lines) f << l << '\n';
}

std::vector<std::int32_t> word_ids(const data::Vocabulary& vocab, std::string list, const char* key) {
  std::replace(list.begin(), list.end(), ',', ' ');
  std::vector<std::int32_t> ids;
  for (const auto& w : data::tokenize(list)) {
    if (!vocab.contains(w)) throw ConfigError(std::string(key) + ": '" + w + "' is not in the vocabulary");
    ids.push_back(vocab.index(w));
  }
  if (ids.empty()) throw ConfigError(std::string(key) + ": empty word list");
  return ids;
}

bool contains_any(const data::Tokens& t, const std::vector<std::int32_t>& ids) {
  return std::any_of(t.begin(), t.end(), [&](auto id) { return std::find(ids.begin(), ids.end(), id) != ids.end(); });
}

void emit_report(const eval::MetricReport& r, const std::optional<std::string>& metrics_path, std::ostream& out) {
  out << r.to_table();
  if (metrics_path) r.append_to(*metrics_path);
}

// --- commands -----------------------------------------------------------------------

int cmd_train(const RunConfig& c, std::ostream& out) {
  c.validate();
  fs::create_directories(c.out);
  {
    std::ofstream echo(fs::path(c.out) / "config.txt", std::ios::binary);
    if (!echo) throw IoError("cannot write " + (fs::path(c.out) / "config.txt").string());
    echo << c.to_text();
  }
  out << c.to_text();

  TrainHooks hooks;
  hooks.checkpoint_dir = fs::path(c.out);
  hooks.on_epoch = [&](std::size_t epoch, Trainer& t) {
    out << "epoch " << epoch << " l_rec " << t.last_rec_loss() << " w " << t.last_w_estimate() << std::endl;
  };

  TrainLog log;
  if (c.modality() == Modality::Text) {
    auto d = load_training_text(c);
    if (d.corpus.size() == 0) throw ConfigError("data: no usable sentences in " + c.data);
    if (c.train.transfer && !d.corpus.labeled()) throw ConfigError("transfer: data carries no attribute labels");
    d.vocab.save(fs::path(c.out) / "vocab.txt");
    hooks.vocab_hash = d.vocab.hash();
    Bundle bundle(c.arch(d.vocab.size(), 0), c.train.seed);
    log = run_training(bundle, TrainData{&d.corpus, nullptr}, c.train, hooks);
    latent::write_code_dump(fs::path(c.out) / "codes.bin", encode_all(bundle, d.corpus.sequences));
  } else {
    const auto images = load_images(c);
    Bundle bundle(c.arch(0, images.pixels), c.train.seed);
    log = run_training(bundle, TrainData{nullptr, &images}, c.train, hooks);
    latent::write_code_dump(fs::path(c.out) / "codes.bin", encode_all(bundle, images));
  }
  log.save(fs::path(c.out) / "train_log.jsonl");
  out << "wrote " << c.out << '\n';
  return kExitOk;
}

int cmd_sample(const RunConfig& c, const Options& o, std::ostream& out) {
  const auto m = load_model(o.checkpoint);
  const std::size_t n = o.n.value_or(10);
  Tensor codes;
  if (o.source == "gan") {
    if (n > 0) codes = generate_codes(m.bundle, sample_z(m.bundle, n, c.train.seed));
  } else if (o.source == "ae-gaussian") {
    Tensor pool;
    if (!o.codes.empty()) {
      pool = latent::read_code_dump(o.codes);
    } else if (o.data) {
      pool = m.vocab ? encode_all(m.bundle, load_text(c, *m.vocab).sequences) : encode_all(m.bundle, load_images(c));
    } else {
      throw ConfigError("source: ae-gaussian needs --codes or --data");
    }
    if (pool.cols() != m.bundle.arch().code_dim()) throw ConfigError("codes: width does not match the checkpoint");
    SeededRng rng(c.train.seed);
    if (n > 0) codes = latent::sample_codes(latent::fit_code_gaussian(pool), n, rng);
  } else {
    throw ConfigError("source: expected gan or ae-gaussian, got '" + o.source + "'");
  }
  write_lines(render(m, codes, decode_len(c)), o.out, out);
  return kExitOk;
}

int cmd_interpolate(const RunConfig& c, const Options& o, std::ostream& out) {
  const auto m = load_model(o.checkpoint);
  const auto z = sample_z(m.bundle, 2, c.train.seed);
  std::vector<std::string> lines;
  for (const auto& zi : latent::interpolate(row(z, 0), row(z, 1), o.steps)) {
    lines.push_back(render(m, generate_codes(m.bundle, zi), decode_len(c)).front());
  }
  write_lines(lines, o.out, out);
  return kExitOk;
}

int cmd_arithmetic(const RunConfig& c, const Options& o, std::ostream& out) {
  const auto m = load_model(o.checkpoint, Modality::Text);
  const auto from = word_ids(*m.vocab, o.from_words, "from");
  const auto to = word_ids(*m.vocab, o.to_words, "to");
  const auto z = sample_z(m.bundle, o.pool, c.train.seed);
  const auto decoded = decode_greedy(m.bundle, generate_codes(m.bundle, z), decode_len(c));
  std::vector<std::size_t> src, dst;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    const bool f = contains_any(decoded[i], from), t = contains_any(decoded[i], to);
    if (f && !t) src.push_back(i);
    if (t && !f) dst.push_back(i);
  }
  auto gather = [&](const std::vector<std::size_t>& idx) {
    Tensor g(Shape{idx.size(), z.cols()});
    for (std::size_t r = 0; r < idx.size(); ++r) std::copy(z.raw() + idx[r] * z.cols(), z.raw() + (idx[r] + 1) * z.cols(), g.raw() + r * z.cols());
    return g;
  };
  const auto offset = latent::build_offset(gather(src), gather(dst));
  const std::size_t probes = std::min(o.n.value_or(100), src.size());
  SeededRng rng(c.train.seed ^ 0xa5a5a5a5ULL);
  std::size_t matched = 0;
  double precision = 0;
  for (std::size_t p = 0; p < probes; ++p) {
    const auto r = latent::apply_offset_and_score(
        m.bundle, row(z, src[p]).reshaped(Shape{z.cols()}), offset.t, o.samples, rng,
        [&](const data::Tokens& s) { return contains_any(s, to); }, decode_len(c));
    if (r.match) {
      ++matched;
      precision += r.precision;
    }
    if (p < 5) {
      const auto hit = std::find_if(r.samples.begin(), r.samples.end(), [&](const auto& s) { return contains_any(s, to); });
      out << m.vocab->decode(r.original) << " => " << (hit == r.samples.end() ? "-" : m.vocab->decode(*hit)) << '\n';
    }
  }
  eval::MetricReport report(c.data, o.checkpoint, c.train.seed);
  report.add("probes", static_cast<double>(probes));
  report.add("match", probes ? static_cast<double>(matched) / static_cast<double>(probes) : 0.0);
  report.add("precision", matched ? precision / static_cast<double>(matched) : 0.0);
  emit_report(report, o.out, out);
  return kExitOk;
}

int cmd_transfer(const RunConfig& c, const Options& o, std::ostream& out) {
  const auto m = load_model(o.checkpoint, Modality::Text);
  if (m.bundle.heads.size() < 2) throw ConfigError("checkpoint: model has no attribute decoders");
  const auto& vocab = *m.vocab;
  const bool synth = c.data == "synth";
  if (!synth && !fs::exists(c.data)) throw ConfigError("data: no such file or directory: " + c.data);

  if (!synth && !fs::is_directory(c.data)) {
    if (!o.to || *o.to >= m.bundle.heads.size()) throw ConfigError("to: unlabeled input needs a valid --to attribute");
    const auto corpus = data::load_text_corpus(c.data, vocab, c.max_len);
    std::vector<std::string> lines;
    if (corpus.size() > 0) {
      for (const auto& t : decode_greedy(m.bundle, encode_all(m.bundle, corpus.sequences), decode_len(c), *o.to)) {
        lines.push_back(vocab.decode(t));
      }
    }
    write_lines(lines, o.out, out);
    return kExitOk;
  }

  data::SequenceCorpus reference, inputs;
  if (synth) {
    reference = synth_text(c.synth_size, c.data_seed).corpus;
    inputs = synth_text(o.n.value_or(1000), c.data_seed + 1).corpus;
  } else {
    const auto all = data::load_attribute_corpus(c.data, vocab, c.max_len);
    std::vector<std::size_t> ref_idx, in_idx;
    for (std::size_t i = 0; i < all.size(); ++i) (i % 10 == 9 ? in_idx : ref_idx).push_back(i);
    if (o.n && in_idx.size() > *o.n) in_idx.resize(*o.n);
    reference = all.subset(ref_idx);
    inputs = all.subset(in_idx);
  }
  if (inputs.size() == 0 || reference.size() == 0) throw ConfigError("data: not enough labeled sentences");

  SeededRng rng(c.train.seed);
  eval::BowClassifier judge(vocab.size(), 2);
  judge.train(reference.sequences, reference.labels, 3, 0.1, rng);
  const double judge_acc = judge.accuracy(inputs.sequences, inputs.labels);
  if (judge_acc < eval::kJudgeGate) warn("attribute judge accuracy " + std::to_string(judge_acc) + " is below the gate");
  eval::LmConfig lm;
  lm.seed = c.train.seed;
  const auto real_lm = eval::train_lm(reference.sequences, vocab.size(), lm);
  const auto metrics =
      eval::transfer_eval(m.bundle, inputs, judge, real_lm, inputs.sequences, lm, decode_len(c));

  std::vector<std::string> lines;
  const auto codes = encode_all(m.bundle, inputs.sequences);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto t = decode_sequence_greedy(m.bundle, row(codes, i), decode_len(c), 1 - inputs.labels[i]);
    lines.push_back(vocab.decode(inputs.sequences[i]) + "\t" + vocab.decode(t));
  }
  write_lines(lines, o.out, out);

  eval::MetricReport report(c.data, o.checkpoint, c.train.seed);
  report.add("judge_accuracy", judge_acc);
  report.add("transfer", metrics.transfer);
  report.add("bleu", metrics.bleu);
  report.add("ppl", metrics.ppl);
  report.add("reverse_ppl", metrics.reverse_ppl);
  out << report.to_table();
  return kExitOk;
}

int cmd_eval(const RunConfig& c, const Options& o, std::ostream& out) {
  static const std::set<std::string> suites{"all", "reconstruction", "noising", "smoothness", "reverse-ppl", "moments"};
  if (!suites.contains(o.suite)) throw ConfigError("suite: unknown suite '" + o.suite + "'");
  const auto m = load_model(o.checkpoint);
  const bool text = m.vocab.has_value();
  const bool all = o.suite == "all";
  if (!text && !all && o.suite != "reconstruction" && o.suite != "moments") {
    throw ArchitectureError("suite " + o.suite + " needs a text model");
  }
  std::optional<Model> baseline;
  if (!o.baseline.empty()) baseline = load_model(o.baseline, m.bundle.arch().modality);
  if (o.suite == "noising" && !baseline) throw ConfigError("baseline: the noising suite needs an AE --baseline");

  eval::MetricReport report(c.data, o.checkpoint, c.train.seed);
  SeededRng rng(c.train.seed);
  data::SequenceCorpus corpus;
  data::ImageCorpus images;
  if (text) {
    corpus = load_text(c, *m.vocab);
  } else {
    images = load_images(c);
  }
  const std::size_t limit = o.n.value_or(text ? corpus.size() : images.size());
  if (text && corpus.size() > limit) corpus.sequences.resize(limit);
  if (!text && images.size() > limit) images.images.resize(limit);
  const Tensor codes = text ? encode_all(m.bundle, corpus.sequences) : encode_all(m.bundle, images);

  if (all || o.suite == "reconstruction") {
    if (text) {
      const auto dec = decode_greedy(m.bundle, codes, decode_len(c));
      const auto nll = sequence_losses(m.bundle, codes, corpus.sequences);
      std::size_t exact = 0;
      double total = 0;
      for (std::size_t i = 0; i < dec.size(); ++i) {
        exact += data::Tokens(corpus.sequences[i].begin(), corpus.sequences[i].end() - 1) == dec[i];
        total += nll[i];
      }
      report.add("reconstruction_exact", static_cast<double>(exact) / static_cast<double>(dec.size()));
      report.add("reconstruction_nll", total / static_cast<double>(dec.size()));
    } else {
      const auto probs = decode_image(m.bundle, codes);
      std::size_t right = 0;
      for (std::size_t i = 0; i < images.size(); ++i) {
        for (std::size_t p = 0; p < images.pixels; ++p) right += (probs.at(i, p) > 0.5f) == (images.images[i][p] != 0);
      }
      report.add("pixel_accuracy", static_cast<double>(right) / static_cast<double>(images.size() * images.pixels));
    }
  }
  if (all || o.suite == "moments") {
    const auto g = generate_codes(m.bundle, sample_z(m.bundle, codes.rows(), c.train.seed));
    const auto gaps = eval::moment_diagnostics(codes, g);
    report.add("code_norm", code_stats(codes).mean_norm);
    report.add("generator_norm", code_stats(g).mean_norm);
    report.add("moment_gap1", gaps[0]);
    report.add("moment_gap2", gaps[1]);
  }
  if (text && (all || o.suite == "smoothness")) {
    SeededRng probe_rng(c.train.seed);
    report.add("smoothness", eval::smoothness_probe(m.bundle, corpus.sequences, probe_rng).mean_cosine);
    if (baseline) {
      SeededRng base_rng(c.train.seed);
      report.add("baseline_smoothness", eval::smoothness_probe(baseline->bundle, corpus.sequences, base_rng).mean_cosine);
    }
  }
  if (text && baseline && (all || o.suite == "noising")) {
    const std::vector<std::size_t> ks{0, 1, 2, 3, 4};
    const auto rows = eval::noising_table(m.bundle, baseline->bundle, corpus.sequences, ks, rng);
    out << std::left << std::setw(4) << "k" << std::setw(11) << "sentences" << std::setw(12) << "model_nll"
        << "baseline_nll\n";
    for (const auto& r : rows) {
      out << std::left << std::setw(4) << r.k << std::setw(11) << r.sentences << std::setw(12) << r.arae_nll
          << r.ae_nll << '\n';
      report.add("noising_k" + std::to_string(r.k) + "_model", r.arae_nll);
      report.add("noising_k" + std::to_string(r.k) + "_baseline", r.ae_nll);
    }
  }
  if (text && (all || o.suite == "reverse-ppl")) {
    const std::size_t n = o.n.value_or(5000);
    auto samples = decode_greedy(m.bundle, generate_codes(m.bundle, sample_z(m.bundle, n, c.train.seed)), decode_len(c));
    eval::LmConfig lm;
    lm.seed = c.train.seed;
    const auto heldout = heldout_text(c, corpus);
    const auto r = eval::reverse_ppl(samples, heldout, m.vocab->size(), lm, 1);
    report.add("reverse_ppl", r.ppl);
    report.add("distinct_ratio", r.distinct_ratio);
  }
  emit_report(report, o.out, out);
  return kExitOk;
}

int cmd_synth(const RunConfig& c, const Options& o, std::ostream& out) {
  const std::size_t n = o.n.value_or(c.synth_size);
  if (!o.out) throw ConfigError("out: synth needs --out");
  SeededRng rng(c.train.seed);
  if (c.modality() == Modality::Image) {
    const auto images = data::synth_images(n, c.image_side, rng);
    data::save_binary_images(*o.out, images);
    out << "wrote " << images.size() << " images to " << *o.out << '\n';
    return kExitOk;
  }
  const auto s = data::synth_corpus("sentiment", n, rng);
  fs::create_directories(*o.out);
  // Sorted file order is the label order when the directory is loaded back.
  const char* names[2] = {"0_positive.txt", "1_negative.txt"};
  for (int label = 0; label < 2; ++label) {
    std::ofstream f(fs::path(*o.out) / names[label], std::ios::binary);
    if (!f) throw IoError("cannot write into " + *o.out);
    for (std::size_t i = 0; i < s.lines.size(); ++i) {
      if (s.corpus.labels[i] == label) f << s.lines[i] << '\n';
    }
  }
  out << "wrote " << s.lines.size() << " sentences to " << *o.out << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarially regularized autoencoders for text and binarised images"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "flat key = value configuration file");
    sub->add_option("--preset", o.preset, "text-desk, image-desk, text-paper or image-paper");
    sub->add_option("--set", o.sets, "key=value override (repeatable)");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--data", o.data, "dataset path or 'synth'");
    sub->add_option("--out", o.out, "output directory (train) or file");
    sub->add_option("--lambda1", o.lambda1, "adversarial weight on the encoder; 0 gives the AE baseline");
    sub->add_option("--lambda2", o.lambda2, "attribute-adversary weight on the encoder");
    sub->add_option("--epochs", o.epochs, "training epochs");
    sub->add_option("--mode", o.mode, "text or image");
    sub->add_option("--n", o.n, "number of outputs or sentences");
  };
  auto with_checkpoint = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint file (vocab.txt must sit beside it)");
  };

  auto* train = app.add_subcommand("train", "train a model and write checkpoints");
  common(train);
  auto* sample = app.add_subcommand("sample", "decode samples from the generator or a Gaussian fit to codes");
  with_checkpoint(sample);
  sample->add_option("--source", o.source, "gan or ae-gaussian");
  sample->add_option("--codes", o.codes, "code dump for ae-gaussian");
  auto* interp = app.add_subcommand("interpolate", "decode a straight line between two latent samples");
  with_checkpoint(interp);
  interp->add_option("--steps", o.steps, "points on the line, endpoints included");
  auto* arith = app.add_subcommand("arithmetic", "offset-vector attribute change in latent space");
  with_checkpoint(arith);
  arith->add_option("--from-words", o.from_words, "comma-separated source words");
  arith->add_option("--to-words", o.to_words, "comma-separated target words");
  arith->add_option("--samples", o.samples, "decoder samples per probe");
  arith->add_option("--pool", o.pool, "latent samples used to build the offset");
  auto* transfer = app.add_subcommand("transfer", "attribute transfer with the attribute decoders");
  with_checkpoint(transfer);
  transfer->add_option("--to", o.to, "target attribute for unlabeled input");
  auto* evaluate = app.add_subcommand("eval", "evaluation suites");
  with_checkpoint(evaluate);
  evaluate->add_option("--suite", o.suite, "all, reconstruction, noising, smoothness, reverse-ppl or moments");
  evaluate->add_option("--baseline", o.baseline, "AE checkpoint to compare against");
  auto* synth = app.add_subcommand("synth", "write the synthetic corpus");
  common(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const RunConfig c = effective_config(o);
    if (train->parsed()) return cmd_train(c, out);
    if (sample->parsed()) return cmd_sample(c, o, out);
    if (interp->parsed()) return cmd_interpolate(c, o, out);
    if (arith->parsed()) return cmd_arithmetic(c, o, out);
    if (transfer->parsed()) return cmd_transfer(c, o, out);
    if (evaluate->parsed()) return cmd_eval(c, o, out);
    if (synth->parsed()) return cmd_synth(c, o, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace arae::cli
