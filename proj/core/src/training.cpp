#include "arae/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace arae {

namespace fs = std::filesystem;

// --- configuration ---------------------------------------------------------------

void TrainConfig::validate() const {
  auto bad = [](const char* key, const std::string& why) {
    throw ConfigError(std::string(key) + ": " + why);
  };
  if (!(clip_eps > 0)) bad("clip_eps", "must be > 0");
  if (critic_iters < 1) bad("critic_iters", "must be >= 1");
  if (!(lambda1 >= 0)) bad("lambda1", "must be >= 0");
  if (!(lambda2 >= 0)) bad("lambda2", "must be >= 0");
  if (!(lr_ae > 0)) bad("lr_ae", "must be > 0");
  if (!(lr_gen > 0)) bad("lr_gen", "must be > 0");
  if (!(lr_critic > 0)) bad("lr_critic", "must be > 0");
  if (!(lr_classifier > 0)) bad("lr_classifier", "must be > 0");
  if (!(noise_sigma >= 0)) bad("noise_sigma", "must be >= 0");
  if (!(noise_decay > 0 && noise_decay <= 1)) bad("noise_decay", "must be in (0, 1]");
  if (noise_interval < 1) bad("noise_interval", "must be >= 1");
  if (batch_size < 2) bad("batch_size", "must be >= 2");
  if (epochs < 1) bad("epochs", "must be >= 1");
  if (!(grad_clip > 0)) bad("grad_clip", "must be > 0");
  if (log_interval < 1) bad("log_interval", "must be >= 1");
}

std::size_t TrainConfig::gan_loops_at(std::size_t epoch) const {
  std::size_t n = gan_loops;
  for (auto e : gan_loop_epochs) {
    if (e <= epoch) ++n;
  }
  return n;
}

TrainConfig text_paper_config() { return TrainConfig{}; }

TrainConfig image_paper_config() {
  TrainConfig c;
  c.noise_sigma = 0.4;
  c.clip_eps = 0.05;
  c.critic_iters = 10;
  c.lambda1 = 0.2;
  c.ae_optimizer = AeOptimizer::Adam;
  c.lr_ae = 5e-4;
  c.lr_gen = 5e-4;
  c.lr_critic = 5e-5;
  return c;
}

// --- log ---------------------------------------------------------------------

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["step"] = r.step;
    j["l_rec"] = r.l_rec;
    j["w_est"] = r.w_est;
    j["cls_loss"] = r.cls_loss;
    j["c_norm"] = r.c_norm;
    j["cg_norm"] = r.cg_norm;
    j["c_var"] = r.c_var;
    j["cg_var"] = r.cg_var;
    out += j.dump();
    out += '\n';
  }
  return out;
}

TrainLog TrainLog::from_jsonl(std::string_view text) {
  TrainLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TrainLogRecord r;
      r.epoch = j.at("epoch").get<std::size_t>();
      r.step = j.at("step").get<std::size_t>();
      r.l_rec = j.at("l_rec").get<double>();
      r.w_est = j.at("w_est").get<double>();
      r.cls_loss = j.at("cls_loss").get<double>();
      r.c_norm = j.at("c_norm").get<double>();
      r.cg_norm = j.at("cg_norm").get<double>();
      r.c_var = j.at("c_var").get<double>();
      r.cg_var = j.at("cg_var").get<double>();
      log.records.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad training log line: ") + e.what());
    }
  }
  return log;
}

void TrainLog::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_jsonl();
}

CodeStats code_stats(const Tensor& codes) {
  CodeStats s;
  if (codes.empty()) return s;
  const std::size_t n = codes.rows(), d = codes.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = codes.at(i, j);
      sq += v * v;
      mean[j] += v;
    }
    s.mean_norm += std::sqrt(sq);
  }
  s.mean_norm /= static_cast<double>(n);
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    double v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = codes.at(i, j) - mean[j];
      v += x * x;
    }
    s.var_trace += v / static_cast<double>(n);
  }
  return s;
}

// --- trainer -----------------------------------------------------------------

namespace {

nn::ParamList<float> concat(nn::ParamList<float> a, const nn::ParamList<float>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void check_finite(double v, const char* phase) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss in ") + phase);
}

/// Runs `f`, making sure any NumericError it raises names `phase`.
template <typename F>
double in_phase(const char* phase, F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    if (msg.find(phase) != std::string::npos) throw;
    throw NumericError(msg + " in " + phase);
  }
}

Var<float> reconstruction(Tape<float>& tape, const Bundle& m, Var<float> codes, const data::SeqBatch& b,
                          std::size_t head) {
  return decoder_nll(tape, m, codes, b, head);
}

Var<float> reconstruction(Tape<float>& tape, const Bundle& m, Var<float> codes, const data::ImageBatch& b,
                          std::size_t) {
  return image_nll(tape, m, codes, b);
}

void require_labels(const data::SeqBatch& b) {
  if (b.labels.size() != b.batch) throw ContractError("classifier phases need a labeled batch");
}

}  // namespace

Trainer::Trainer(Bundle& bundle, const TrainConfig& config)
    : bundle_(&bundle),
      cfg_(config),
      rng_(config.seed ^ 0x9e3779b97f4a7c15ULL),
      sigma_(config.noise_sigma),
      enc_(bundle.encoder_params()),
      dec_(bundle.decoder_params()),
      ae_(concat(enc_, dec_)),
      gen_(bundle.generator_params()),
      critic_(bundle.critic_params()),
      cls_(bundle.classifier_params()),
      ae_sgd_(ae_, config.lr_ae),
      gen_opt_(gen_, config.lr_gen),
      critic_opt_(critic_, config.lr_critic) {
  cfg_.validate();
  if (cfg_.ae_optimizer == AeOptimizer::Adam) {
    ae_adam_ = std::make_unique<nn::Adam<float>>(ae_, cfg_.lr_ae);
    enc_adam_ = std::make_unique<nn::Adam<float>>(enc_, cfg_.lr_ae);
  }
  if (bundle.has_classifier()) cls_opt_ = std::make_unique<nn::Sgd<float>>(cls_, cfg_.lr_classifier);
}

void Trainer::step_ae(const nn::ParamList<float>& params) {
  if (ae_adam_) {
    ae_adam_->step();
  } else {
    nn::Sgd<float>(params, cfg_.lr_ae).step();
  }
}

void Trainer::step_encoder() {
  if (enc_adam_) {
    enc_adam_->step();
  } else {
    nn::Sgd<float>(enc_, cfg_.lr_ae).step();
  }
}

void Trainer::tick_noise() {
  if (++ticks_ % cfg_.noise_interval == 0) sigma_ *= cfg_.noise_decay;
}

Tensor Trainer::sample_z(std::size_t n) {
  return rng_.normal_tensor<float>(Shape{n, bundle_->arch().z_dim});
}

template <typename Batch>
double Trainer::phase1_impl(const Batch& batch, std::size_t head) {
  Tape<float> tape;
  auto codes = encode(tape, *bundle_, batch);
  auto noisy = add_code_noise(codes, sigma_, rng_);
  auto loss = reconstruction(tape, *bundle_, noisy, batch, head);
  const double value = loss.value().item();
  check_finite(value, "reconstruction");
  nn::zero_grad(ae_);
  tape.backward(loss);
  nn::clip_grad_norm(ae_, cfg_.grad_clip);
  step_ae(ae_);
  last_real_ = codes.value();
  last_rec_ = value;
  return value;
}

double Trainer::phase1(const data::SeqBatch& batch, std::size_t head) {
  return in_phase("reconstruction", [&] { return phase1_impl(batch, head); });
}
double Trainer::phase1(const data::ImageBatch& batch) {
  return in_phase("reconstruction", [&] { return phase1_impl(batch, 0); });
}

template <typename Batch>
double Trainer::critic_impl(const Batch& batch) {
  Tensor real, fake;
  {
    Tape<float> tape;
    real = encode(tape, *bundle_, batch).value();
  }
  {
    Tape<float> tape;
    auto z = tape.constant(sample_z(cfg_.batch_size));
    fake = bundle_->generator.forward_frozen(tape, z, nn::Mode::Train).value();
  }
  return critic_step(real, fake);
}

double Trainer::critic_step(const data::SeqBatch& real) {
  return in_phase("critic", [&] { return critic_impl(real); });
}
double Trainer::critic_step(const data::ImageBatch& real) {
  return in_phase("critic", [&] { return critic_impl(real); });
}

double Trainer::critic_step(const Tensor& real_codes, const Tensor& fake_codes) {
  {
    Tape<float> tape;
    auto loss = critic_loss(tape, *bundle_, tape.constant(real_codes), tape.constant(fake_codes));
    check_finite(loss.value().item(), "critic");
    nn::zero_grad(critic_);
    tape.backward(loss);
    critic_opt_.step();
    nn::clamp_values(critic_, static_cast<float>(cfg_.clip_eps));
  }
  Tape<float> tape;
  auto gap = critic_loss(tape, *bundle_, tape.constant(real_codes), tape.constant(fake_codes));
  last_w_ = -static_cast<double>(gap.value().item());
  return last_w_;
}

template <typename Batch>
double Trainer::phase3_impl(const Batch& batch) {
  Tape<float> tape;
  auto real = encode(tape, *bundle_, batch);
  auto z = tape.constant(sample_z(cfg_.batch_size));
  auto fake = generate(tape, *bundle_, z, nn::Mode::Train, true);
  auto loss = adversarial_loss(tape, *bundle_, real, fake, static_cast<float>(cfg_.lambda1));
  const double value = loss.value().item();
  check_finite(value, "encoder/generator");
  nn::zero_grad(enc_);
  nn::zero_grad(gen_);
  tape.backward(loss);
  gen_opt_.step();
  step_encoder();
  last_real_ = real.value();
  last_fake_ = fake.value();
  return value;
}

double Trainer::phase3(const data::SeqBatch& real) {
  return in_phase("encoder/generator", [&] { return phase3_impl(real); });
}
double Trainer::phase3(const data::ImageBatch& real) {
  return in_phase("encoder/generator", [&] { return phase3_impl(real); });
}

double Trainer::phase2b(const data::SeqBatch& batch) {
  require_labels(batch);
  if (!cls_opt_) throw ConfigError("model has no code classifier");
  return in_phase("classifier", [&] {
    Tape<float> tape;
    auto codes = tape.detach(encode(tape, *bundle_, batch));
    auto loss = classifier_loss(tape, *bundle_, codes, batch.labels);
    const double value = loss.value().item();
    check_finite(value, "classifier");
    nn::zero_grad(cls_);
    tape.backward(loss);
    cls_opt_->step();
    last_cls_ = value;
    return value;
  });
}

double Trainer::phase3b(const data::SeqBatch& batch) {
  require_labels(batch);
  return in_phase("adversarial classifier", [&] {
    Tape<float> tape;
    auto codes = encode(tape, *bundle_, batch);
    auto loss = flipped_classifier_loss(tape, *bundle_, scale_grad(codes, static_cast<float>(cfg_.lambda2)),
                                        batch.labels);
    const double value = loss.value().item();
    check_finite(value, "adversarial classifier");
    nn::zero_grad(enc_);
    tape.backward(loss);
    step_encoder();
    return value;
  });
}

// --- training loop -------------------------------------------------------------

namespace {

/// Shuffled passes over a fixed index pool.
class IndexStream {
 public:
  IndexStream(std::vector<std::size_t> pool, std::size_t batch, SeededRng rng)
      : pool_(std::move(pool)), batch_(batch), rng_(rng) {
    if (pool_.empty()) throw InsufficientDataError("training data is empty");
    reshuffle();
  }

  /// Next batch of the current pass; false once the pass is exhausted.
  bool next(std::vector<std::size_t>& out) {
    if (pos_ >= pool_.size()) return false;
    const std::size_t end = std::min(pool_.size(), pos_ + batch_);
    out.assign(pool_.begin() + static_cast<std::ptrdiff_t>(pos_), pool_.begin() + static_cast<std::ptrdiff_t>(end));
    pos_ = end;
    return true;
  }

  /// Next batch, starting a new pass whenever one runs out.
  std::vector<std::size_t> cycle() {
    std::vector<std::size_t> out;
    if (!next(out)) {
      reshuffle();
      next(out);
    }
    return out;
  }

  void reshuffle() {
    rng_.shuffle(pool_.begin(), pool_.end());
    pos_ = 0;
  }

 private:
  std::vector<std::size_t> pool_;
  std::size_t batch_;
  SeededRng rng_;
  std::size_t pos_ = 0;
};

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

struct EpochItem {
  std::vector<std::size_t> indices;
  std::size_t head = 0;
};

}  // namespace

TrainLog run_training(Bundle& bundle, const TrainData& data, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  const bool text = data.text != nullptr;
  if (text == (data.images != nullptr)) throw ContractError("exactly one training corpus is required");
  if (text != (bundle.arch().modality == Modality::Text)) {
    throw ArchitectureError("training data modality does not match the model");
  }
  const std::size_t n = text ? data.text->size() : data.images->size();
  if (n == 0) throw InsufficientDataError("training data is empty");
  if (config.transfer) {
    if (!text || !data.text->labeled()) throw ConfigError("transfer training needs a labeled text corpus");
    if (bundle.arch().num_classes != 2) {
      throw ConfigError("transfer training supports exactly 2 attribute values, model has " +
                        std::to_string(bundle.arch().num_classes));
    }
    if (bundle.heads.size() != bundle.arch().num_classes) {
      throw ConfigError("transfer training needs one decoder head per attribute value");
    }
  }

  SeededRng master(config.seed);
  std::vector<IndexStream> ae_streams;
  if (config.transfer) {
    for (int c = 0; c < 2; ++c) {
      auto pool = data.text->indices_with_label(c);
      if (pool.empty()) throw InsufficientDataError("no sentences with attribute " + std::to_string(c));
      ae_streams.emplace_back(std::move(pool), config.batch_size, master.fork());
    }
  } else {
    ae_streams.emplace_back(iota(n), config.batch_size, master.fork());
  }
  IndexStream gan_stream(iota(n), config.batch_size, master.fork());
  IndexStream cls_stream(iota(n), config.batch_size, master.fork());
  SeededRng log_rng = master.fork();

  Trainer trainer(bundle, config);
  TrainLog log;

  auto text_batch = [&](const std::vector<std::size_t>& idx) { return data::make_batch(*data.text, idx); };
  auto image_batch = [&](const std::vector<std::size_t>& idx) { return data::make_image_batch(*data.images, idx); };

  auto record = [&](std::size_t epoch, std::size_t step) {
    TrainLogRecord r;
    r.epoch = epoch;
    r.step = step;
    r.l_rec = trainer.last_rec_loss();
    r.w_est = trainer.last_w_estimate();
    r.cls_loss = trainer.last_cls_loss();
    const auto cs = code_stats(trainer.last_real_codes());
    r.c_norm = cs.mean_norm;
    r.c_var = cs.var_trace;
    Tensor fake = trainer.last_fake_codes();
    if (fake.empty()) {
      fake = generate_codes(bundle, log_rng.normal_tensor<float>(Shape{config.batch_size, bundle.arch().z_dim}));
    }
    const auto gs = code_stats(fake);
    r.cg_norm = gs.mean_norm;
    r.cg_var = gs.var_trace;
    log.records.push_back(r);
  };

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::size_t loops = config.gan_loops_at(epoch);

    std::vector<EpochItem> items;
    {
      std::vector<std::vector<EpochItem>> per_stream(ae_streams.size());
      for (std::size_t s = 0; s < ae_streams.size(); ++s) {
        ae_streams[s].reshuffle();
        EpochItem it;
        it.head = s;
        while (ae_streams[s].next(it.indices)) per_stream[s].push_back(it);
      }
      for (std::size_t i = 0;; ++i) {
        bool any = false;
        for (auto& ps : per_stream) {
          if (i < ps.size()) {
            items.push_back(std::move(ps[i]));
            any = true;
          }
        }
        if (!any) break;
      }
    }

    for (const auto& item : items) {
      ++step;
      if (text) {
        trainer.phase1(text_batch(item.indices), item.head);
      } else {
        trainer.phase1(image_batch(item.indices));
      }
      for (std::size_t l = 0; l < loops; ++l) {
        for (std::size_t k = 0; k < config.critic_iters; ++k) {
          if (text) {
            trainer.critic_step(text_batch(gan_stream.cycle()));
          } else {
            trainer.critic_step(image_batch(gan_stream.cycle()));
          }
        }
        if (text) {
          trainer.phase3(text_batch(gan_stream.cycle()));
        } else {
          trainer.phase3(image_batch(gan_stream.cycle()));
        }
      }
      if (config.transfer) {
        trainer.phase2b(text_batch(cls_stream.cycle()));
        trainer.phase3b(text_batch(cls_stream.cycle()));
      }
      trainer.tick_noise();
      if (step % config.log_interval == 0) record(epoch, step);
      if (hooks.on_step) hooks.on_step(step, trainer);
    }
    if (log.records.empty() || log.records.back().step != step) record(epoch, step);
    if (hooks.on_epoch) hooks.on_epoch(epoch, trainer);
    if (hooks.checkpoint_dir) {
      fs::create_directories(*hooks.checkpoint_dir);
      save_checkpoint(bundle, *hooks.checkpoint_dir / ("epoch" + std::to_string(epoch) + ".ckpt"), hooks.vocab_hash);
    }
  }
  return log;
}

// --- checkpoints ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'A', 'R', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::uint8_t u8() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) throw CorruptionError("checkpoint is truncated");
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::string str(std::size_t limit = 1 << 20) {
    const auto n = u32();
    if (n > limit) throw CorruptionError("checkpoint string length out of range");
    std::string s(n, '\0');
    if (!in_.read(s.data(), n)) throw CorruptionError("checkpoint is truncated");
    return s;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }

 private:
  std::istream& in_;
};

std::vector<std::pair<std::string, Tensor*>> entries_of(Bundle& b) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto* p : b.all_params()) out.emplace_back(p->name, &p->value);
  for (auto& [name, t] : b.buffers()) out.emplace_back(name, t);
  return out;
}

}  // namespace

void save_checkpoint(Bundle& bundle, const fs::path& path, std::uint64_t vocab_hash) {
  const auto entries = entries_of(bundle);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    Writer w(out);
    out.write(kMagic, 4);
    w.u32(kVersion);
    w.u64(vocab_hash);
    w.str(bundle.arch().serialize());
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, t] : entries) {
      w.str(name);
      w.u8(kDtypeF32);
      w.u32(static_cast<std::uint32_t>(t->rank()));
      for (auto d : t->shape()) w.u64(d);
      for (float v : t->data()) w.f32(v);
    }
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path, std::optional<Modality> expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char magic[4] = {};
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  Reader r(in);
  const auto version = r.u32();
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.vocab_hash = r.u64();
  const auto arch = ArchSpec::parse(r.str());
  if (expect && arch.modality != *expect) {
    throw ArchitectureError(std::string("checkpoint holds a ") + (arch.modality == Modality::Text ? "text" : "image") +
                            " model, expected " + (*expect == Modality::Text ? "text" : "image"));
  }
  Bundle bundle(arch, 0);
  auto entries = entries_of(bundle);
  const auto count = r.u32();
  if (count != entries.size()) {
    throw CorruptionError("checkpoint has " + std::to_string(count) + " tensors, architecture needs " +
                          std::to_string(entries.size()));
  }
  for (auto& [name, t] : entries) {
    const auto stored = r.str();
    if (stored != name) throw CorruptionError("expected tensor '" + name + "', found '" + stored + "'");
    if (r.u8() != kDtypeF32) throw CorruptionError("tensor '" + name + "' has an unknown dtype");
    const auto rank = r.u32();
    if (rank > 8) throw CorruptionError("tensor '" + name + "' has rank out of range");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    if (shape != t->shape()) {
      throw CorruptionError("tensor '" + name + "' stored as " + shape_str(shape) + ", architecture says " +
                            shape_str(t->shape()));
    }
    for (auto& v : t->data()) v = r.f32();
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CorruptionError("trailing bytes after checkpoint");
  ck.bundle = std::move(bundle);
  return ck;
}

}  // namespace arae
