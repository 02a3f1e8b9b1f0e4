#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "arae/data.hpp"
#include "arae/model.hpp"
#include "arae/optim.hpp"

namespace arae {

enum class AeOptimizer { Sgd, Adam };

struct TrainConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double clip_eps = 0.01;
  std::size_t critic_iters = 5;
  std::size_t gan_loops = 1;                     // loops per iteration in the first epoch
  std::vector<std::size_t> gan_loop_epochs{2, 4, 6};  // +1 loop at the start of each listed epoch
  AeOptimizer ae_optimizer = AeOptimizer::Sgd;
  double lr_ae = 1.0;
  double lr_gen = 5e-5;
  double lr_critic = 1e-5;
  double lr_classifier = 0.1;
  double noise_sigma = 0.2;
  double noise_decay = 0.995;
  std::size_t noise_interval = 100;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  double grad_clip = 1.0;
  bool transfer = false;
  std::size_t log_interval = 50;

  void validate() const;
  /// Loops per iteration during `epoch` (1-based).
  std::size_t gan_loops_at(std::size_t epoch) const;
};

/// Published hyperparameters for text and binarised images.
TrainConfig text_paper_config();
TrainConfig image_paper_config();

struct TrainLogRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double l_rec = 0;
  double w_est = 0;
  double cls_loss = 0;
  double c_norm = 0;
  double cg_norm = 0;
  double c_var = 0;
  double cg_var = 0;

  friend bool operator==(const TrainLogRecord&, const TrainLogRecord&) = default;
};

struct TrainLog {
  std::vector<TrainLogRecord> records;

  /// One JSON object per line with fields epoch, step, l_rec, w_est,
  /// cls_loss, c_norm, cg_norm, c_var, cg_var.
  std::string to_jsonl() const;
  static TrainLog from_jsonl(std::string_view text);
  void save(const std::filesystem::path& path) const;
};

/// Mean row L2 norm and the sum of per-dimension variances of a code batch.
struct CodeStats {
  double mean_norm = 0;
  double var_trace = 0;
};
CodeStats code_stats(const Tensor& codes);

/// The individual optimisation phases. Each phase zeroes and updates only its
/// own parameter groups.
class Trainer {
 public:
  Trainer(Bundle& bundle, const TrainConfig& config);

  /// Reconstruction with code noise at the current sigma; clips the
  /// encoder/decoder gradient norm and steps the autoencoder optimiser.
  double phase1(const data::SeqBatch& batch, std::size_t head = 0);
  double phase1(const data::ImageBatch& batch);

  /// One critic update (loss -mean f(c) + mean f(c~)) followed by clamping
  /// every critic weight to [-eps, eps]. Returns mean f(c) - mean f(c~).
  double critic_step(const data::SeqBatch& real);
  double critic_step(const data::ImageBatch& real);
  double critic_step(const Tensor& real_codes, const Tensor& fake_codes);

  /// Encoder and generator step on mean f(c) - mean f(c~); the critic is frozen.
  double phase3(const data::SeqBatch& real);
  double phase3(const data::ImageBatch& real);

  /// Code classifier step on detached codes.
  double phase2b(const data::SeqBatch& batch);
  /// Encoder step on -mean log p_u(1 - y | c), scaled by lambda2.
  double phase3b(const data::SeqBatch& batch);

  double sigma() const { return sigma_; }
  void set_sigma(double s) { sigma_ = s; }
  /// Multiplies sigma by the decay factor every `noise_interval` calls.
  void tick_noise();

  /// Codes from the most recent phase that produced them.
  const Tensor& last_real_codes() const { return last_real_; }
  const Tensor& last_fake_codes() const { return last_fake_; }
  double last_w_estimate() const { return last_w_; }
  double last_cls_loss() const { return last_cls_; }
  double last_rec_loss() const { return last_rec_; }

  /// Fresh z ~ N(0, I) of shape [n x d_z].
  Tensor sample_z(std::size_t n);
  SeededRng& rng() { return rng_; }
  Bundle& bundle() { return *bundle_; }

 private:
  template <typename Batch>
  double phase1_impl(const Batch& batch, std::size_t head);
  template <typename Batch>
  double critic_impl(const Batch& batch);
  template <typename Batch>
  double phase3_impl(const Batch& batch);
  void step_ae(const nn::ParamList<float>& params);
  void step_encoder();

  Bundle* bundle_;
  TrainConfig cfg_;
  SeededRng rng_;
  double sigma_;
  std::size_t ticks_ = 0;

  nn::ParamList<float> enc_, dec_, ae_, gen_, critic_, cls_;
  nn::Sgd<float> ae_sgd_;
  std::unique_ptr<nn::Adam<float>> ae_adam_;
  std::unique_ptr<nn::Adam<float>> enc_adam_;
  nn::Adam<float> gen_opt_;
  nn::Adam<float> critic_opt_;
  std::unique_ptr<nn::Sgd<float>> cls_opt_;

  Tensor last_real_, last_fake_;
  double last_w_ = 0, last_cls_ = 0, last_rec_ = 0;
};

/// Training data: exactly one of `text` or `images` is set.
struct TrainData {
  const data::SequenceCorpus* text = nullptr;
  const data::ImageCorpus* images = nullptr;
};

struct TrainHooks {
  /// Called at the end of every epoch (1-based).
  std::function<void(std::size_t epoch, Trainer& trainer)> on_epoch;
  /// Called after every outer iteration.
  std::function<void(std::size_t step, Trainer& trainer)> on_step;
  /// Per-epoch checkpoints are written here when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::uint64_t vocab_hash = 0;
};

/// Adversarial autoencoder training (with attribute transfer when
/// config.transfer is set). Per iteration,
/// one reconstruction step, then gan_loops rounds of critic_iters critic steps
/// and one encoder/generator step; transfer adds one classifier step and one
/// adversarial encoder step. Non-finite losses raise NumericError naming the
/// phase.
TrainLog run_training(Bundle& bundle, const TrainData& data, const TrainConfig& config, const TrainHooks& hooks = {});

// --- checkpoints ---------------------------------------------------------------

struct Checkpoint {
  Bundle bundle;
  std::uint64_t vocab_hash = 0;
};

/// "ARAE", u32 version, u64 vocabulary hash, architecture descriptor, then
/// named tensors (name, dtype tag, rank, dims, little-endian f32 values).
void save_checkpoint(Bundle& bundle, const std::filesystem::path& path, std::uint64_t vocab_hash = 0);
/// Throws FormatError on a bad header, CorruptionError on truncation or shape
/// mismatch and ArchitectureError when `expect` disagrees with the stored model.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<Modality> expect = std::nullopt);

}  // namespace arae
