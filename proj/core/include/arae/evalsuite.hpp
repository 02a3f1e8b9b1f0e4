#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arae/data.hpp"
#include "arae/model.hpp"
#include "arae/nn.hpp"

namespace arae::eval {

// --- noising and distances ------------------------------------------------------------

/// k transpositions over 2k distinct random content positions. A trailing EOS
/// stays in place. Needs 2k <= number of content tokens.
data::Tokens k_swap(std::span<const std::int32_t> tokens, std::size_t k, SeededRng& rng);
/// Swaps the given position pairs in order.
data::Tokens k_swap_at(std::span<const std::int32_t> tokens,
                       std::span<const std::pair<std::size_t, std::size_t>> pairs);

/// Token-level Levenshtein distance.
std::size_t edit_distance(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

/// Corpus BLEU in [0, 1] over 1..4-grams of content tokens with a uniform
/// geometric mean. A higher-order precision with no matches becomes
/// 1 / (total + 1); brevity penalty exp(1 - r/c) when c <= r.
double bleu(std::span<const data::Tokens> candidates, std::span<const data::Tokens> references);
double bleu(std::span<const std::int32_t> candidate, std::span<const std::int32_t> reference);

// --- language model ---------------------------------------------------------------

struct LmConfig {
  std::size_t embed = 32;
  std::size_t hidden = 64;
  double lr = 1.0;
  double grad_clip = 1.0;
  std::size_t batch_size = 32;
  std::size_t epochs = 4;
  std::uint64_t seed = 1;
};

/// Embedding, one LSTM layer and a softmax over the vocabulary.
class LanguageModel {
 public:
  LanguageModel(std::size_t vocab, const LmConfig& config);

  std::size_t vocab() const { return out.out_dim; }
  /// Mean over the batch of the sentence NLL (EOS included).
  Var<float> batch_nll(Tape<float>& tape, const data::SeqBatch& batch, std::vector<double>* per_sentence = nullptr) const;
  /// Next-token distribution after `prefix` (SOS implied).
  std::vector<double> next_distribution(std::span<const std::int32_t> prefix) const;
  nn::ParamList<float> params();

  nn::Embedding<float> embed;
  nn::LstmCell<float> cell;
  nn::Affine<float> out;
};

/// SGD with gradient-norm clipping over shuffled batches. Sequences end with EOS.
LanguageModel train_lm(std::span<const data::Tokens> corpus, std::size_t vocab, const LmConfig& config);
/// exp(total NLL / total tokens), EOS counted as a token.
double perplexity(const LanguageModel& lm, std::span<const data::Tokens> corpus);

struct ReversePpl {
  double ppl = 0;
  double distinct_ratio = 0;
  bool mode_collapse_suspect = false;  // distinct ratio below 1%
};

/// Trains a fresh LM on `samples` (content tokens; EOS is appended) and
/// measures its perplexity on `real_heldout`.
ReversePpl reverse_ppl(std::span<const data::Tokens> samples, std::span<const data::Tokens> real_heldout,
                       std::size_t vocab, const LmConfig& config, std::size_t min_samples = 100);
double distinct_ratio(std::span<const data::Tokens> samples);

// --- attribute judge --------------------------------------------------------------

/// Bag-of-words logistic regression used as an independent attribute judge.
class BowClassifier {
 public:
  BowClassifier(std::size_t vocab, std::size_t classes);
  void train(std::span<const data::Tokens> sentences, std::span<const int> labels, std::size_t epochs, double lr,
             SeededRng& rng);
  int predict(std::span<const std::int32_t> tokens) const;
  double accuracy(std::span<const data::Tokens> sentences, std::span<const int> labels) const;

 private:
  std::vector<double> scores(std::span<const std::int32_t> tokens) const;
  std::size_t vocab_, classes_;
  std::vector<double> w_;  // [classes x vocab]
  std::vector<double> b_;
};

inline constexpr double kJudgeGate = 0.95;

struct TransferMetrics {
  double transfer = 0;     // fraction judged as the target attribute
  double bleu = 0;         // 0..100
  double ppl = 0;          // transferred text under the real-data LM
  double reverse_ppl = 0;  // LM trained on transferred text, scored on real held-out text
  std::size_t count = 0;
};

/// Encodes each labeled sentence, greedily decodes it with the opposite
/// attribute head and scores the outputs.
TransferMetrics transfer_eval(const Bundle& m, const data::SequenceCorpus& sentences, const BowClassifier& judge,
                              const LanguageModel& real_lm, std::span<const data::Tokens> real_heldout,
                              const LmConfig& lm_config, std::size_t max_len);

// --- code-space diagnostics ---------------------------------------------------------

/// Entry i is the order-(i+1) gap: ||mean(a) - mean(b)||_inf, then
/// max |cov(a) - cov(b)| (biased covariances). max_order is 1 or 2.
std::vector<double> moment_diagnostics(const Tensor& a, const Tensor& b, std::size_t max_order = 2);

struct NoisingRow {
  std::size_t k = 0;
  std::size_t sentences = 0;  // sentences long enough for k swaps
  double arae_nll = 0;
  double ae_nll = 0;
};

/// Mean NLL of the original sentence given the code of its k-swapped version,
/// for both models on identical noised inputs. Sentences shorter than 2k
/// content tokens are skipped for that k.
std::vector<NoisingRow> noising_table(const Bundle& arae, const Bundle& ae, std::span<const data::Tokens> sentences,
                                      std::span<const std::size_t> k_values, SeededRng& rng);

struct SmoothnessResult {
  double mean_cosine = 0;
  std::size_t corpus_neighbors = 0;
  std::size_t synthetic_neighbors = 0;
};

/// For each probe, mean cosine between its code and the codes of neighbours
/// within max_edit token edits (1 <= distance). Neighbours come from the corpus
/// first; shortfalls are filled with randomly edited copies of the probe.
SmoothnessResult smoothness_probe(const Bundle& m, std::span<const data::Tokens> corpus, SeededRng& rng,
                                  std::size_t n_sentences = 250, std::size_t n_neighbors = 100,
                                  std::size_t max_edit = 5);

struct ProbeConfig {
  std::vector<std::size_t> hidden{64};
  std::size_t epochs = 30;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

/// Trains an MLP on frozen codes and returns its accuracy on the test codes.
double code_probe_accuracy(const Tensor& train_codes, std::span<const int> train_labels, const Tensor& test_codes,
                           std::span<const int> test_labels, std::size_t classes, const ProbeConfig& config);

/// Encoder and classifier trained jointly on the labeled data alone; returns
/// test accuracy.
double supervised_accuracy(const ArchSpec& encoder_arch, std::span<const data::Tokens> train,
                           std::span<const int> train_labels, std::span<const data::Tokens> test,
                           std::span<const int> test_labels, std::size_t classes, const ProbeConfig& config);

struct SemiSupervisedResult {
  double supervised = 0;
  double ae = 0;
  double arae = 0;
};

SemiSupervisedResult semi_supervised_probe(const Bundle& ae, const Bundle& arae, std::span<const data::Tokens> train,
                                           std::span<const int> train_labels, std::span<const data::Tokens> test,
                                           std::span<const int> test_labels, std::size_t classes,
                                           const ProbeConfig& config);

// --- reports ---------------------------------------------------------------------

/// Named scalar metrics with provenance. Entries can only be appended.
class MetricReport {
 public:
  MetricReport(std::string dataset, std::string checkpoint, std::uint64_t seed);

  /// Throws NumericError for a non-finite value.
  void add(const std::string& name, double value);
  const std::vector<std::pair<std::string, double>>& metrics() const { return metrics_; }
  double get(const std::string& name) const;

  /// One record per metric: {"dataset","checkpoint","seed","metric","value"}.
  std::string to_jsonl() const;
  std::string to_table() const;
  void append_to(const std::filesystem::path& path) const;

 private:
  std::string dataset_, checkpoint_;
  std::uint64_t seed_;
  std::vector<std::pair<std::string, double>> metrics_;
};

}  // namespace arae::eval
