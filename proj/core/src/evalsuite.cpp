#include "arae/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "arae/log.hpp"
#include "arae/optim.hpp"
#include "json.hpp"

namespace arae::eval {

namespace {

bool is_content(std::int32_t id) { return id != data::kPad && id != data::kSos && id != data::kEos; }

data::Tokens content_of(std::span<const std::int32_t> t) {
  data::Tokens out;
  for (auto id : t) {
    if (id == data::kEos) break;
    if (is_content(id)) out.push_back(id);
  }
  return out;
}

data::Tokens with_eos(const data::Tokens& t) {
  data::Tokens out = t;
  out.push_back(data::kEos);
  return out;
}

std::size_t content_length(std::span<const std::int32_t> t) {
  return (!t.empty() && t.back() == data::kEos) ? t.size() - 1 : t.size();
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

// --- noising and distances ------------------------------------------------------------

data::Tokens k_swap(std::span<const std::int32_t> tokens, std::size_t k, SeededRng& rng) {
  const std::size_t n = content_length(tokens);
  if (2 * k > n) {
    throw ContractError("k_swap with k=" + std::to_string(k) + " needs at least " + std::to_string(2 * k) +
                        " tokens, sentence has " + std::to_string(n));
  }
  auto pos = iota(n);
  for (std::size_t i = 0; i < 2 * k; ++i) std::swap(pos[i], pos[i + rng.below(n - i)]);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < k; ++i) pairs.emplace_back(pos[2 * i], pos[2 * i + 1]);
  return k_swap_at(tokens, pairs);
}

data::Tokens k_swap_at(std::span<const std::int32_t> tokens,
                       std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  data::Tokens out(tokens.begin(), tokens.end());
  const std::size_t n = content_length(tokens);
  for (auto [a, b] : pairs) {
    if (a >= n || b >= n) throw IndexError("swap position outside the sentence");
    std::swap(out[a], out[b]);
  }
  return out;
}

std::size_t edit_distance(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double bleu(std::span<const data::Tokens> candidates, std::span<const data::Tokens> references) {
  if (candidates.size() != references.size()) throw ContractError("bleu needs one reference per candidate");
  constexpr std::size_t kMaxN = 4;
  std::size_t matched[kMaxN] = {}, total[kMaxN] = {};
  std::size_t cand_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto c = content_of(candidates[s]);
    const auto r = content_of(references[s]);
    cand_len += c.size();
    ref_len += r.size();
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      std::map<std::vector<std::int32_t>, std::size_t> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[{r.begin() + i, r.begin() + i + n}];
      for (std::size_t i = 0; i + n <= c.size(); ++i) {
        ++total[n - 1];
        auto it = ref_counts.find({c.begin() + i, c.begin() + i + n});
        if (it != ref_counts.end() && it->second > 0) {
          --it->second;
          ++matched[n - 1];
        }
      }
    }
  }
  if (cand_len == 0) {
    warn("bleu of an empty candidate is 0");
    return 0.0;
  }
  if (matched[0] == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxN; ++n) {
    const double p = n > 0 && matched[n] == 0 ? 1.0 / static_cast<double>(total[n] + 1)
                                              : static_cast<double>(matched[n]) / static_cast<double>(total[n]);
    log_sum += std::log(p);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * std::exp(log_sum / kMaxN);
}

double bleu(std::span<const std::int32_t> candidate, std::span<const std::int32_t> reference) {
  const data::Tokens c(candidate.begin(), candidate.end()), r(reference.begin(), reference.end());
  return bleu(std::span<const data::Tokens>(&c, 1), std::span<const data::Tokens>(&r, 1));
}

// --- language model ---------------------------------------------------------------

LanguageModel::LanguageModel(std::size_t vocab, const LmConfig& config)
    : embed("lm.embed", vocab, config.embed),
      cell("lm.lstm", config.embed, config.hidden),
      out("lm.out", config.hidden, vocab) {
  SeededRng rng(config.seed);
  embed.init(rng);
  cell.init(rng);
  out.init(rng);
}

nn::ParamList<float> LanguageModel::params() {
  nn::ParamList<float> p;
  embed.collect(p);
  cell.collect(p);
  out.collect(p);
  return p;
}

Var<float> LanguageModel::batch_nll(Tape<float>& tape, const data::SeqBatch& batch,
                                    std::vector<double>* per_sentence) const {
  const std::size_t b = batch.batch;
  for (auto id : batch.tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab()) throw IndexError("token outside the LM vocabulary");
  }
  if (per_sentence) per_sentence->assign(b, 0.0);
  auto state = cell.zero_state(tape, b);
  std::vector<std::int32_t> prev(b, data::kSos);
  Var<float> total;
  for (std::size_t t = 0; t < batch.width; ++t) {
    const auto mask = batch.mask(t);
    const auto target = batch.column(t);
    state = cell.step(tape, embed.forward(tape, prev), state);
    auto logits = out.forward(tape, state.h);
    std::vector<float> w(b);
    for (std::size_t i = 0; i < b; ++i) w[i] = mask[i] ? 1.0f / static_cast<float>(b) : 0.0f;
    auto step = weighted_softmax_nll<float>(logits, target, w);
    total = total.valid() ? add(total, step) : step;
    if (per_sentence) {
      const auto& lv = logits.value();
      const std::size_t v = lv.cols();
      for (std::size_t i = 0; i < b; ++i) {
        if (!mask[i]) continue;
        const float* row = lv.raw() + i * v;
        const double mx = *std::max_element(row, row + v);
        double s = 0.0;
        for (std::size_t j = 0; j < v; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
        (*per_sentence)[i] += mx + std::log(s) - static_cast<double>(row[target[i]]);
      }
    }
    prev = target;
  }
  return total;
}

std::vector<double> LanguageModel::next_distribution(std::span<const std::int32_t> prefix) const {
  Tape<float> tape;
  auto state = cell.zero_state(tape, 1);
  std::int32_t prev = data::kSos;
  for (std::size_t t = 0; t <= prefix.size(); ++t) {
    state = cell.step(tape, embed.forward(tape, std::span<const std::int32_t>(&prev, 1)), state);
    if (t < prefix.size()) prev = prefix[t];
  }
  const auto p = softmax_rows(out.forward(tape, state.h).value());
  return std::vector<double>(p.data().begin(), p.data().end());
}

LanguageModel train_lm(std::span<const data::Tokens> corpus, std::size_t vocab, const LmConfig& config) {
  if (corpus.empty()) throw ContractError("cannot train a language model on an empty corpus");
  LanguageModel lm(vocab, config);
  auto params = lm.params();
  SeededRng rng(config.seed ^ 0x5bd1e995ULL);
  auto order = iota(corpus.size());
  std::vector<data::Tokens> chunk;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      chunk.clear();
      for (std::size_t i = begin; i < end; ++i) chunk.push_back(corpus[order[i]]);
      Tape<float> tape;
      auto loss = lm.batch_nll(tape, data::make_batch(chunk));
      if (!std::isfinite(loss.value().item())) throw NumericError("non-finite language-model loss");
      nn::zero_grad(params);
      tape.backward(loss);
      nn::clip_grad_norm(params, config.grad_clip);
      nn::Sgd<float>(params, config.lr).step();
    }
  }
  return lm;
}

double perplexity(const LanguageModel& lm, std::span<const data::Tokens> corpus) {
  if (corpus.empty()) throw ContractError("perplexity of an empty corpus");
  double nll = 0.0;
  std::size_t tokens = 0;
  std::vector<double> part;
  for (std::size_t begin = 0; begin < corpus.size(); begin += 256) {
    const std::size_t end = std::min(corpus.size(), begin + 256);
    auto batch = data::make_batch(corpus.subspan(begin, end - begin));
    Tape<float> tape;
    lm.batch_nll(tape, batch, &part);
    for (double v : part) nll += v;
    for (auto l : batch.lengths) tokens += l;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

double distinct_ratio(std::span<const data::Tokens> samples) {
  if (samples.empty()) return 0.0;
  std::set<data::Tokens> distinct(samples.begin(), samples.end());
  return static_cast<double>(distinct.size()) / static_cast<double>(samples.size());
}

ReversePpl reverse_ppl(std::span<const data::Tokens> samples, std::span<const data::Tokens> real_heldout,
                       std::size_t vocab, const LmConfig& config, std::size_t min_samples) {
  if (samples.size() < min_samples) {
    throw ContractError("reverse perplexity needs at least " + std::to_string(min_samples) + " samples, got " +
                        std::to_string(samples.size()));
  }
  std::vector<data::Tokens> train;
  train.reserve(samples.size());
  for (const auto& s : samples) train.push_back(with_eos(content_of(s)));
  ReversePpl r;
  r.distinct_ratio = distinct_ratio(samples);
  r.mode_collapse_suspect = r.distinct_ratio < 0.01;
  if (r.mode_collapse_suspect) warn("mode-collapse suspect: distinct-sample ratio " + std::to_string(r.distinct_ratio));
  r.ppl = perplexity(train_lm(train, vocab, config), real_heldout);
  return r;
}

// --- attribute judge --------------------------------------------------------------

BowClassifier::BowClassifier(std::size_t vocab, std::size_t classes)
    : vocab_(vocab), classes_(classes), w_(vocab * classes, 0.0), b_(classes, 0.0) {
  if (classes < 2) throw ConfigError("a classifier needs at least two classes");
}

std::vector<double> BowClassifier::scores(std::span<const std::int32_t> tokens) const {
  std::vector<double> s = b_;
  for (auto id : tokens) {
    if (!is_content(id)) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_) throw IndexError("token outside the judge vocabulary");
    for (std::size_t c = 0; c < classes_; ++c) s[c] += w_[c * vocab_ + static_cast<std::size_t>(id)];
  }
  return s;
}

void BowClassifier::train(std::span<const data::Tokens> sentences, std::span<const int> labels, std::size_t epochs,
                          double lr, SeededRng& rng) {
  if (sentences.size() != labels.size() || sentences.empty()) throw ContractError("judge needs labeled sentences");
  auto order = iota(sentences.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    rng.shuffle(order.begin(), order.end());
    for (auto i : order) {
      auto s = scores(sentences[i]);
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (auto& v : s) z += v = std::exp(v - mx);
      for (std::size_t c = 0; c < classes_; ++c) {
        const double g = s[c] / z - (static_cast<int>(c) == labels[i] ? 1.0 : 0.0);
        b_[c] -= lr * g;
        for (auto id : sentences[i]) {
          if (is_content(id)) w_[c * vocab_ + static_cast<std::size_t>(id)] -= lr * g;
        }
      }
    }
  }
}

int BowClassifier::predict(std::span<const std::int32_t> tokens) const {
  const auto s = scores(tokens);
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

double BowClassifier::accuracy(std::span<const data::Tokens> sentences, std::span<const int> labels) const {
  if (sentences.empty()) throw ContractError("accuracy of an empty set");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) ok += predict(sentences[i]) == labels[i];
  return static_cast<double>(ok) / static_cast<double>(sentences.size());
}

TransferMetrics transfer_eval(const Bundle& m, const data::SequenceCorpus& sentences, const BowClassifier& judge,
                              const LanguageModel& real_lm, std::span<const data::Tokens> real_heldout,
                              const LmConfig& lm_config, std::size_t max_len) {
  if (!sentences.labeled()) throw ContractError("transfer evaluation needs labeled sentences");
  if (m.heads.size() < 2) throw ConfigError("transfer evaluation needs a model with attribute decoder heads");
  std::vector<data::Tokens> outputs, originals;
  std::size_t hits = 0;
  for (int y = 0; y < 2; ++y) {
    const auto idx = sentences.indices_with_label(y);
    if (idx.empty()) continue;
    std::vector<data::Tokens> src;
    for (auto i : idx) src.push_back(sentences.sequences[i]);
    const auto codes = encode_all(m, src);
    const auto out = decode_greedy(m, codes, max_len, static_cast<std::size_t>(1 - y));
    for (std::size_t i = 0; i < out.size(); ++i) {
      hits += judge.predict(out[i]) == 1 - y;
      outputs.push_back(out[i]);
      originals.push_back(content_of(src[i]));
    }
  }
  if (outputs.empty()) throw ContractError("no sentences to transfer");
  TransferMetrics r;
  r.count = outputs.size();
  r.transfer = static_cast<double>(hits) / static_cast<double>(outputs.size());
  r.bleu = 100.0 * bleu(outputs, originals);
  std::vector<data::Tokens> terminated;
  for (const auto& o : outputs) terminated.push_back(with_eos(o));
  r.ppl = perplexity(real_lm, terminated);
  r.reverse_ppl = reverse_ppl(outputs, real_heldout, m.arch().vocab_size, lm_config, 1).ppl;
  return r;
}

// --- code-space diagnostics ---------------------------------------------------------

namespace {

struct Moments {
  std::vector<double> mean;
  std::vector<double> cov;  // d x d, biased
};

Moments moments(const Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  Moments m{std::vector<double>(d, 0.0), std::vector<double>(d * d, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += x.at(i, j);
  }
  for (auto& v : m.mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const double da = x.at(i, a) - m.mean[a];
      for (std::size_t b = 0; b < d; ++b) m.cov[a * d + b] += da * (x.at(i, b) - m.mean[b]);
    }
  }
  for (auto& v : m.cov) v /= static_cast<double>(n);
  return m;
}

}  // namespace

std::vector<double> moment_diagnostics(const Tensor& a, const Tensor& b, std::size_t max_order) {
  if (max_order < 1 || max_order > 2) throw ContractError("moment diagnostics support orders 1 and 2");
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) throw DimensionError("moment diagnostics need equal widths");
  const auto ma = moments(a), mb = moments(b);
  std::vector<double> gaps;
  double g1 = 0.0;
  for (std::size_t j = 0; j < ma.mean.size(); ++j) g1 = std::max(g1, std::abs(ma.mean[j] - mb.mean[j]));
  gaps.push_back(g1);
  if (max_order >= 2) {
    double g2 = 0.0;
    for (std::size_t j = 0; j < ma.cov.size(); ++j) g2 = std::max(g2, std::abs(ma.cov[j] - mb.cov[j]));
    gaps.push_back(g2);
  }
  return gaps;
}

std::vector<NoisingRow> noising_table(const Bundle& arae, const Bundle& ae, std::span<const data::Tokens> sentences,
                                      std::span<const std::size_t> k_values, SeededRng& rng) {
  if (arae.arch().vocab_size != ae.arch().vocab_size) throw ContractError("models use different vocabularies");
  std::vector<NoisingRow> rows;
  for (auto k : k_values) {
    std::vector<data::Tokens> noised, originals;
    for (const auto& s : sentences) {
      if (content_length(s) < 2 * k) continue;
      noised.push_back(k_swap(s, k, rng));
      originals.push_back(s);
    }
    NoisingRow row;
    row.k = k;
    row.sentences = noised.size();
    if (!noised.empty()) {
      auto mean_of = [&](const Bundle& m) {
        const auto losses = sequence_losses(m, encode_all(m, noised), originals);
        double s = 0.0;
        for (double v : losses) s += v;
        return s / static_cast<double>(losses.size());
      };
      row.arae_nll = mean_of(arae);
      row.ae_nll = mean_of(ae);
    }
    rows.push_back(row);
  }
  return rows;
}

namespace {

data::Tokens random_edit(const data::Tokens& probe, std::size_t max_edit, std::size_t vocab, SeededRng& rng) {
  data::Tokens words(probe.begin(), probe.begin() + static_cast<std::ptrdiff_t>(content_length(probe)));
  const std::size_t edits = 1 + rng.below(max_edit);
  auto random_token = [&] {
    return static_cast<std::int32_t>(data::kNumReserved + rng.below(vocab - data::kNumReserved));
  };
  for (std::size_t e = 0; e < edits; ++e) {
    const auto kind = rng.below(3);
    if (kind == 0 && !words.empty()) {
      words[rng.below(words.size())] = random_token();
    } else if (kind == 1 && words.size() > 1) {
      words.erase(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size())));
    } else {
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size() + 1)), random_token());
    }
  }
  words.push_back(data::kEos);
  return words;
}

}  // namespace

SmoothnessResult smoothness_probe(const Bundle& m, std::span<const data::Tokens> corpus, SeededRng& rng,
                                  std::size_t n_sentences, std::size_t n_neighbors, std::size_t max_edit) {
  if (corpus.empty()) throw ContractError("smoothness probe needs a corpus");
  if (n_neighbors == 0 || max_edit == 0) throw ContractError("smoothness probe needs neighbours");
  auto order = iota(corpus.size());
  rng.shuffle(order.begin(), order.end());
  const std::size_t probes = std::min(n_sentences, corpus.size());
  SmoothnessResult r;
  double total = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    const auto& probe = corpus[order[p]];
    std::vector<data::Tokens> group{probe};
    for (std::size_t tries = 0; tries < 20 * n_neighbors && group.size() <= n_neighbors; ++tries) {
      const auto& cand = corpus[rng.below(corpus.size())];
      const auto d = edit_distance(probe, cand);
      if (d >= 1 && d <= max_edit) group.push_back(cand);
    }
    r.corpus_neighbors += group.size() - 1;
    while (group.size() <= n_neighbors) {
      auto cand = random_edit(probe, max_edit, m.arch().vocab_size, rng);
      const auto d = edit_distance(probe, cand);
      if (d < 1 || d > max_edit) continue;
      group.push_back(std::move(cand));
      ++r.synthetic_neighbors;
    }
    const auto codes = encode_all(m, group);
    const std::size_t dim = codes.cols();
    double sum = 0.0;
    for (std::size_t i = 1; i < group.size(); ++i) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        dot += static_cast<double>(codes.at(0, j)) * codes.at(i, j);
        na += static_cast<double>(codes.at(0, j)) * codes.at(0, j);
        nb += static_cast<double>(codes.at(i, j)) * codes.at(i, j);
      }
      sum += dot / std::sqrt(na * nb);
    }
    total += sum / static_cast<double>(group.size() - 1);
  }
  r.mean_cosine = total / static_cast<double>(probes);
  return r;
}

namespace {

Tensor gather(const Tensor& x, std::span<const std::size_t> idx) {
  Tensor out(Shape{idx.size(), x.cols()});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(x.raw() + idx[r] * x.cols(), x.raw() + (idx[r] + 1) * x.cols(), out.raw() + r * x.cols());
  }
  return out;
}

double argmax_accuracy(const Tensor& logits, std::span<const int> labels) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const float* row = logits.raw() + i * logits.cols();
    ok += static_cast<int>(std::max_element(row, row + logits.cols()) - row) == labels[i];
  }
  return static_cast<double>(ok) / static_cast<double>(logits.rows());
}

}  // namespace

double code_probe_accuracy(const Tensor& train_codes, std::span<const int> train_labels, const Tensor& test_codes,
                           std::span<const int> test_labels, std::size_t classes, const ProbeConfig& config) {
  if (train_codes.rows() != train_labels.size() || test_codes.rows() != test_labels.size()) {
    throw ContractError("one label per code required");
  }
  std::vector<std::size_t> dims{train_codes.cols()};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(classes);
  nn::Mlp<float> mlp("probe", dims, false, nn::Activation::None);
  SeededRng rng(config.seed);
  mlp.init(rng);
  nn::ParamList<float> params;
  mlp.collect(params);
  nn::Adam<float> opt(params, config.lr);
  auto order = iota(train_codes.rows());
  for (std::size_t e = 0; e < config.epochs; ++e) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::span<const std::size_t> idx(order.data() + begin, end - begin);
      std::vector<std::int32_t> y;
      for (auto i : idx) y.push_back(train_labels[i]);
      Tape<float> tape;
      auto loss = softmax_cross_entropy<float>(mlp.forward_frozen(tape, tape.constant(gather(train_codes, idx))), y);
      nn::zero_grad(params);
      tape.backward(loss);
      opt.step();
    }
  }
  Tape<float> tape;
  return argmax_accuracy(mlp.forward_frozen(tape, tape.constant(test_codes)).value(), test_labels);
}

double supervised_accuracy(const ArchSpec& encoder_arch, std::span<const data::Tokens> train,
                           std::span<const int> train_labels, std::span<const data::Tokens> test,
                           std::span<const int> test_labels, std::size_t classes, const ProbeConfig& config) {
  if (train.size() != train_labels.size() || test.size() != test_labels.size()) {
    throw ContractError("one label per sentence required");
  }
  ArchSpec arch = encoder_arch;
  arch.num_classes = classes;
  arch.classifier_hidden = config.hidden;
  Bundle m(arch, config.seed);
  auto params = m.encoder_params();
  const auto cls = m.classifier_params();
  params.insert(params.end(), cls.begin(), cls.end());
  nn::Adam<float> opt(params, config.lr);
  SeededRng rng(config.seed ^ 0x2545f491ULL);
  auto order = iota(train.size());
  std::vector<data::Tokens> seqs;
  std::vector<int> ys;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      seqs.clear();
      ys.clear();
      for (std::size_t i = begin; i < end; ++i) {
        seqs.push_back(train[order[i]]);
        ys.push_back(train_labels[order[i]]);
      }
      Tape<float> tape;
      auto loss = classifier_loss(tape, m, encode(tape, m, data::make_batch(seqs)), ys);
      nn::zero_grad(params);
      tape.backward(loss);
      opt.step();
    }
  }
  const auto codes = encode_all(m, test);
  Tape<float> tape;
  return argmax_accuracy(classifier_logits(tape, m, tape.constant(codes)).value(), test_labels);
}

SemiSupervisedResult semi_supervised_probe(const Bundle& ae, const Bundle& arae, std::span<const data::Tokens> train,
                                           std::span<const int> train_labels, std::span<const data::Tokens> test,
                                           std::span<const int> test_labels, std::size_t classes,
                                           const ProbeConfig& config) {
  SemiSupervisedResult r;
  r.supervised = supervised_accuracy(ae.arch(), train, train_labels, test, test_labels, classes, config);
  r.ae = code_probe_accuracy(encode_all(ae, train), train_labels, encode_all(ae, test), test_labels, classes, config);
  r.arae =
      code_probe_accuracy(encode_all(arae, train), train_labels, encode_all(arae, test), test_labels, classes, config);
  return r;
}

// --- reports ---------------------------------------------------------------------

MetricReport::MetricReport(std::string dataset, std::string checkpoint, std::uint64_t seed)
    : dataset_(std::move(dataset)), checkpoint_(std::move(checkpoint)), seed_(seed) {}

void MetricReport::add(const std::string& name, double value) {
  if (!std::isfinite(value)) throw NumericError("metric " + name + " is not finite");
  metrics_.emplace_back(name, value);
}

double MetricReport::get(const std::string& name) const {
  for (const auto& [n, v] : metrics_) {
    if (n == name) return v;
  }
  throw ContractError("no metric named " + name);
}

std::string MetricReport::to_jsonl() const {
  std::string out;
  for (const auto& [name, value] : metrics_) {
    nlohmann::ordered_json j;
    j["dataset"] = dataset_;
    j["checkpoint"] = checkpoint_;
    j["seed"] = seed_;
    j["metric"] = name;
    j["value"] = value;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string MetricReport::to_table() const {
  std::size_t width = 6;
  for (const auto& [name, v] : metrics_) width = std::max(width, name.size());
  std::ostringstream os;
  os << "dataset: " << dataset_ << "  checkpoint: " << checkpoint_ << "  seed: " << seed_ << '\n';
  os << std::left << std::setw(static_cast<int>(width)) << "metric" << "  value\n";
  for (const auto& [name, value] : metrics_) {
    os << std::left << std::setw(static_cast<int>(width)) << name << "  " << std::setprecision(6) << value << '\n';
  }
  return os.str();
}

void MetricReport::append_to(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_jsonl();
}

}  // namespace arae::eval
