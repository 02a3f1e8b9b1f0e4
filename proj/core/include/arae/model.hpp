#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arae/autodiff.hpp"
#include "arae/data.hpp"
#include "arae/nn.hpp"
#include "arae/rng.hpp"

namespace arae {

enum class Modality { Text, Image };

/// Every shape in a ModelBundle follows from this descriptor.
struct ArchSpec {
  Modality modality = Modality::Text;

  // text
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden = 64;  // LSTM width, which is also the code width
  std::size_t decoder_heads = 1;

  // image
  std::size_t pixels = 0;
  std::vector<std::size_t> image_encoder_hidden{800, 400};
  std::vector<std::size_t> image_decoder_hidden{400, 800, 1000};
  std::size_t image_code = 100;

  std::size_t z_dim = 32;
  std::vector<std::size_t> generator_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{64, 64};
  std::vector<std::size_t> classifier_hidden{64};
  std::size_t num_classes = 0;  // 0 = no code classifier

  std::size_t code_dim() const { return modality == Modality::Text ? hidden : image_code; }
  void validate() const;

  /// One-line `key=value;...` form stored in checkpoints.
  std::string serialize() const;
  static ArchSpec parse(std::string_view text);

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

enum class CodeSource { Encoder, Generator };

struct CodeVector {
  Tensor values;  // [d_code]
  CodeSource source = CodeSource::Encoder;
};

/// One attribute-specific decoder: LSTM over [embedding; code] and an output
/// layer over [hidden; code].
template <typename T>
struct DecoderHead {
  nn::LstmCell<T> cell;
  nn::Affine<T> out;
};

/// Encoder, decoder head(s), generator, critic and optional code classifier.
template <typename T>
class ModelBundle {
 public:
  ModelBundle() = default;
  ModelBundle(const ArchSpec& arch, std::uint64_t seed);

  const ArchSpec& arch() const { return arch_; }
  bool has_classifier() const { return arch_.num_classes > 0; }

  nn::ParamList<T> encoder_params();
  nn::ParamList<T> decoder_params();
  nn::ParamList<T> generator_params();
  nn::ParamList<T> critic_params();
  nn::ParamList<T> classifier_params();
  nn::ParamList<T> all_params();

  /// Named non-trainable state (batch-norm running statistics).
  std::vector<std::pair<std::string, BasicTensor<T>*>> buffers();

  // text
  nn::Embedding<T> enc_embed;
  nn::LstmCell<T> enc_cell;
  nn::Embedding<T> dec_embed;
  std::vector<DecoderHead<T>> heads;
  // image
  nn::Mlp<T> enc_mlp;
  nn::Mlp<T> dec_mlp;

  nn::Mlp<T> generator;
  nn::Mlp<T> critic;
  nn::Mlp<T> classifier;

 private:
  ArchSpec arch_;
};

// --- batched graph builders ---------------------------------------------------------

/// Unit-norm codes [B x d], final LSTM hidden state of each sequence.
template <typename T>
Var<T> encode(Tape<T>& tape, const ModelBundle<T>& m, const data::SeqBatch& batch);
template <typename T>
Var<T> encode(Tape<T>& tape, const ModelBundle<T>& m, const data::ImageBatch& batch);

/// codes + sigma * N(0, I), as a constant added on the tape.
template <typename T>
Var<T> add_code_noise(Var<T> codes, double sigma, SeededRng& rng);
Tensor add_code_noise(const Tensor& codes, double sigma, SeededRng& rng);

/// Mean over the batch of the teacher-forced sentence NLL under decoder head
/// `head`. Per-sentence NLLs are written to `per_sentence` when given.
template <typename T>
Var<T> decoder_nll(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes, const data::SeqBatch& batch,
                   std::size_t head = 0, std::vector<double>* per_sentence = nullptr);

/// Mean over the batch of the per-image Bernoulli NLL.
template <typename T>
Var<T> image_nll(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes, const data::ImageBatch& batch);

/// g(z). BN running statistics are folded in only when mode is Train and
/// update_stats is set.
template <typename T>
Var<T> generate(Tape<T>& tape, ModelBundle<T>& m, Var<T> z, nn::Mode mode, bool update_stats);
template <typename T>
Var<T> generate_frozen(Tape<T>& tape, const ModelBundle<T>& m, Var<T> z);

/// f_w(c) as [B x 1].
template <typename T>
Var<T> critic_scores(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes);
template <typename T>
Var<T> classifier_logits(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes);

/// -mean f(real) + mean f(fake)
template <typename T>
Var<T> critic_loss(Tape<T>& tape, const ModelBundle<T>& m, Var<T> real, Var<T> fake);
/// mean f(real) - mean f(fake), with the gradient reaching `real` scaled by lambda1.
template <typename T>
Var<T> adversarial_loss(Tape<T>& tape, const ModelBundle<T>& m, Var<T> real, Var<T> fake, T lambda1);
/// -mean log p_u(y | c)
template <typename T>
Var<T> classifier_loss(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes, std::span<const int> labels);
/// -mean log p_u(1 - y | c); binary attributes only.
template <typename T>
Var<T> flipped_classifier_loss(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes,
                               std::span<const int> labels);

// --- single-item and inference helpers ------------------------------------------------

using Bundle = ModelBundle<float>;

CodeVector encode_sequence(const Bundle& m, std::span<const std::int32_t> tokens);
CodeVector encode_image(const Bundle& m, std::span<const std::uint8_t> pixels);
/// Codes [N x d] for many sequences, computed in chunks.
Tensor encode_all(const Bundle& m, std::span<const data::Tokens> sequences);
Tensor encode_all(const Bundle& m, const data::ImageCorpus& images);

/// -log p(tokens | code) under `head`; tokens must end with EOS.
double decode_sequence_loss(const Bundle& m, const Tensor& code, std::span<const std::int32_t> tokens,
                            std::optional<int> head = std::nullopt);
/// Per-sentence NLL for each row of `codes` against the matching sequence.
std::vector<double> sequence_losses(const Bundle& m, const Tensor& codes, std::span<const data::Tokens> sequences,
                                    std::size_t head = 0);

/// Greedy decode of every row of `codes`; ties go to the lowest token index.
/// The result excludes EOS.
std::vector<data::Tokens> decode_greedy(const Bundle& m, const Tensor& codes, std::size_t max_len,
                                        std::size_t head = 0);
data::Tokens decode_sequence_greedy(const Bundle& m, const Tensor& code, std::size_t max_len,
                                    std::optional<int> head = std::nullopt);
/// Per-step multinomial sampling from softmax(logits / temperature).
std::vector<data::Tokens> decode_sample(const Bundle& m, const Tensor& codes, std::size_t max_len, SeededRng& rng,
                                        double temperature = 1.0, std::size_t head = 0);

double decode_image_loss(const Bundle& m, const Tensor& code, std::span<const std::uint8_t> pixels);
/// Per-pixel probabilities sigma(h).
Tensor decode_image(const Bundle& m, const Tensor& code);
std::vector<std::uint8_t> threshold_image(const Tensor& probs);

/// Eval-mode generator codes for each row of z.
Tensor generate_codes(const Bundle& m, const Tensor& z);
/// Train mode normalises by the batch statistics of z without recording them.
CodeVector generate_code(const Bundle& m, const Tensor& z, nn::Mode mode = nn::Mode::Eval);
double critic_score(const Bundle& m, const Tensor& code);
/// Softmax over attributes.
Tensor classify_code(const Bundle& m, const Tensor& code);

}  // namespace arae
