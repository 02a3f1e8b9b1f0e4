#include "arae/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace arae {

// --- ArchSpec ---------------------------------------------------------------------

void ArchSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("architecture: " + msg); };
  if (modality == Modality::Text) {
    if (vocab_size < static_cast<std::size_t>(data::kNumReserved)) fail("vocabulary too small");
    if (embed_dim == 0 || hidden == 0) fail("zero text width");
    if (decoder_heads == 0) fail("need at least one decoder head");
  } else {
    if (pixels == 0 || image_code == 0) fail("zero image width");
  }
  if (z_dim == 0) fail("zero latent width");
  if (num_classes == 1) fail("a classifier needs at least two classes");
  auto nonzero = [&](const std::vector<std::size_t>& v, const char* what) {
    for (auto d : v) {
      if (d == 0) fail(std::string("zero width in ") + what);
    }
  };
  nonzero(image_encoder_hidden, "image encoder");
  nonzero(image_decoder_hidden, "image decoder");
  nonzero(generator_hidden, "generator");
  nonzero(critic_hidden, "critic");
  nonzero(classifier_hidden, "classifier");
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::size_t parse_size(std::string_view s, std::string_view key) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("bad architecture value for " + std::string(key) + ": '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::size_t> parse_list(std::string_view s, std::string_view key) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    auto comma = s.find(',', pos);
    out.push_back(parse_size(s.substr(pos, comma - pos), key));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

std::string ArchSpec::serialize() const {
  std::ostringstream os;
  os << "modality=" << (modality == Modality::Text ? "text" : "image") << ";vocab=" << vocab_size
     << ";embed=" << embed_dim << ";hidden=" << hidden << ";heads=" << decoder_heads << ";pixels=" << pixels
     << ";img_enc=" << join(image_encoder_hidden) << ";img_dec=" << join(image_decoder_hidden)
     << ";img_code=" << image_code << ";z=" << z_dim << ";gen=" << join(generator_hidden)
     << ";critic=" << join(critic_hidden) << ";cls=" << join(classifier_hidden) << ";classes=" << num_classes;
  return os.str();
}

ArchSpec ArchSpec::parse(std::string_view text) {
  ArchSpec a;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find(';', pos);
    if (end == std::string_view::npos) end = text.size();
    auto item = text.substr(pos, end - pos);
    pos = end + 1;
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw FormatError("bad architecture item '" + std::string(item) + "'");
    auto key = item.substr(0, eq);
    auto val = item.substr(eq + 1);
    if (key == "modality") {
      if (val == "text") {
        a.modality = Modality::Text;
      } else if (val == "image") {
        a.modality = Modality::Image;
      } else {
        throw FormatError("unknown modality '" + std::string(val) + "'");
      }
    } else if (key == "vocab") {
      a.vocab_size = parse_size(val, key);
    } else if (key == "embed") {
      a.embed_dim = parse_size(val, key);
    } else if (key == "hidden") {
      a.hidden = parse_size(val, key);
    } else if (key == "heads") {
      a.decoder_heads = parse_size(val, key);
    } else if (key == "pixels") {
      a.pixels = parse_size(val, key);
    } else if (key == "img_enc") {
      a.image_encoder_hidden = parse_list(val, key);
    } else if (key == "img_dec") {
      a.image_decoder_hidden = parse_list(val, key);
    } else if (key == "img_code") {
      a.image_code = parse_size(val, key);
    } else if (key == "z") {
      a.z_dim = parse_size(val, key);
    } else if (key == "gen") {
      a.generator_hidden = parse_list(val, key);
    } else if (key == "critic") {
      a.critic_hidden = parse_list(val, key);
    } else if (key == "cls") {
      a.classifier_hidden = parse_list(val, key);
    } else if (key == "classes") {
      a.num_classes = parse_size(val, key);
    } else {
      throw FormatError("unknown architecture key '" + std::string(key) + "'");
    }
  }
  return a;
}

// --- ModelBundle ------------------------------------------------------------------

namespace {

std::vector<std::size_t> dims_of(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> d{in};
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(out);
  return d;
}

}  // namespace

template <typename T>
ModelBundle<T>::ModelBundle(const ArchSpec& arch, std::uint64_t seed) : arch_(arch) {
  arch_.validate();
  SeededRng rng(seed);
  const std::size_t d = arch_.code_dim();
  if (arch_.modality == Modality::Text) {
    const std::size_t v = arch_.vocab_size, e = arch_.embed_dim, h = arch_.hidden;
    enc_embed = nn::Embedding<T>("enc.embed", v, e);
    enc_cell = nn::LstmCell<T>("enc.lstm", e, h);
    dec_embed = nn::Embedding<T>("dec.embed", v, e);
    enc_embed.init(rng);
    enc_cell.init(rng);
    dec_embed.init(rng);
    for (std::size_t i = 0; i < arch_.decoder_heads; ++i) {
      const std::string p = "dec" + std::to_string(i);
      DecoderHead<T> head{nn::LstmCell<T>(p + ".lstm", e + d, h), nn::Affine<T>(p + ".out", h + d, v)};
      head.cell.init(rng);
      head.out.init(rng);
      heads.push_back(std::move(head));
    }
  } else {
    enc_mlp = nn::Mlp<T>("enc", dims_of(arch_.pixels, arch_.image_encoder_hidden, d), false, nn::Activation::None);
    dec_mlp = nn::Mlp<T>("dec", dims_of(d, arch_.image_decoder_hidden, arch_.pixels), false, nn::Activation::None);
    enc_mlp.init(rng);
    dec_mlp.init(rng);
  }
  generator = nn::Mlp<T>("gen", dims_of(arch_.z_dim, arch_.generator_hidden, d), true, nn::Activation::Tanh);
  critic = nn::Mlp<T>("critic", dims_of(d, arch_.critic_hidden, 1), false, nn::Activation::None);
  generator.init(rng);
  critic.init(rng);
  if (arch_.num_classes > 0) {
    classifier =
        nn::Mlp<T>("cls", dims_of(d, arch_.classifier_hidden, arch_.num_classes), false, nn::Activation::None);
    classifier.init(rng);
  }
}

template <typename T>
nn::ParamList<T> ModelBundle<T>::encoder_params() {
  nn::ParamList<T> out;
  if (arch_.modality == Modality::Text) {
    enc_embed.collect(out);
    enc_cell.collect(out);
  } else {
    enc_mlp.collect(out);
  }
  return out;
}

template <typename T>
nn::ParamList<T> ModelBundle<T>::decoder_params() {
  nn::ParamList<T> out;
  if (arch_.modality == Modality::Text) {
    dec_embed.collect(out);
    for (auto& h : heads) {
      h.cell.collect(out);
      h.out.collect(out);
    }
  } else {
    dec_mlp.collect(out);
  }
  return out;
}

template <typename T>
nn::ParamList<T> ModelBundle<T>::generator_params() {
  nn::ParamList<T> out;
  generator.collect(out);
  return out;
}

template <typename T>
nn::ParamList<T> ModelBundle<T>::critic_params() {
  nn::ParamList<T> out;
  critic.collect(out);
  return out;
}

template <typename T>
nn::ParamList<T> ModelBundle<T>::classifier_params() {
  nn::ParamList<T> out;
  if (has_classifier()) classifier.collect(out);
  return out;
}

template <typename T>
nn::ParamList<T> ModelBundle<T>::all_params() {
  nn::ParamList<T> out;
  for (auto&& part : {encoder_params(), decoder_params(), generator_params(), critic_params(), classifier_params()}) {
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>*>> ModelBundle<T>::buffers() {
  std::vector<std::pair<std::string, BasicTensor<T>*>> out;
  for (auto& n : generator.norms) {
    const auto prefix = n.gamma.name.substr(0, n.gamma.name.rfind('.'));
    out.emplace_back(prefix + ".running_mean", &n.running_mean);
    out.emplace_back(prefix + ".running_var", &n.running_var);
  }
  return out;
}

// --- graph builders ---------------------------------------------------------------

namespace {

template <typename T>
void require_text(const ModelBundle<T>& m) {
  if (m.arch().modality != Modality::Text) throw ArchitectureError("operation needs a text model");
}

template <typename T>
void require_image(const ModelBundle<T>& m) {
  if (m.arch().modality != Modality::Image) throw ArchitectureError("operation needs an image model");
}

template <typename T>
const DecoderHead<T>& head_of(const ModelBundle<T>& m, std::size_t head) {
  if (head >= m.heads.size()) {
    throw ConfigError("decoder has no head for attribute " + std::to_string(head) + " (" +
                      std::to_string(m.heads.size()) + " heads)");
  }
  return m.heads[head];
}

bool all_set(const std::vector<std::uint8_t>& mask) {
  return std::all_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; });
}

bool none_set(const std::vector<std::uint8_t>& mask) {
  return std::none_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; });
}

void check_tokens(const data::SeqBatch& batch, std::size_t vocab) {
  for (auto id : batch.tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("token index " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab));
    }
  }
}

}  // namespace

template <typename T>
Var<T> encode(Tape<T>& tape, const ModelBundle<T>& m, const data::SeqBatch& batch) {
  require_text(m);
  if (batch.batch == 0 || batch.width == 0) throw ContractError("cannot encode an empty sequence");
  check_tokens(batch, m.arch().vocab_size);
  auto state = m.enc_cell.zero_state(tape, batch.batch);
  for (std::size_t t = 0; t < batch.width; ++t) {
    const auto mask = batch.mask(t);
    if (none_set(mask)) break;
    const auto ids = batch.column(t);
    auto next = m.enc_cell.step(tape, m.enc_embed.forward(tape, ids), state);
    if (all_set(mask)) {
      state = next;
    } else {
      state.h = where_rows<T>(mask, next.h, state.h);
      state.c = where_rows<T>(mask, next.c, state.c);
    }
  }
  return l2_normalize_rows(state.h);
}

template <typename T>
Var<T> encode(Tape<T>& tape, const ModelBundle<T>& m, const data::ImageBatch& batch) {
  require_image(m);
  if (batch.pixels != m.arch().pixels) {
    throw DimensionError("image has " + std::to_string(batch.pixels) + " pixels, model expects " +
                         std::to_string(m.arch().pixels));
  }
  BasicTensor<T> x(Shape{batch.batch, batch.pixels});
  for (std::size_t i = 0; i < batch.bits.size(); ++i) {
    if (batch.bits[i] > 1) throw ContractError("image pixels must be 0 or 1");
    x[i] = static_cast<T>(batch.bits[i]);
  }
  return l2_normalize_rows(m.enc_mlp.forward_frozen(tape, tape.constant(std::move(x))));
}

template <typename T>
Var<T> add_code_noise(Var<T> codes, double sigma, SeededRng& rng) {
  if (sigma < 0) throw ContractError("noise sigma must be non-negative");
  if (sigma == 0) return codes;
  return add(codes, codes.tape().constant(rng.normal_tensor<T>(codes.shape(), 0.0, sigma)));
}

Tensor add_code_noise(const Tensor& codes, double sigma, SeededRng& rng) {
  if (sigma < 0) throw ContractError("noise sigma must be non-negative");
  Tensor out = codes;
  if (sigma == 0) return out;
  for (auto& v : out.data()) v += static_cast<float>(sigma * rng.normal());
  return out;
}

template <typename T>
Var<T> decoder_nll(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes, const data::SeqBatch& batch,
                   std::size_t head, std::vector<double>* per_sentence) {
  require_text(m);
  const auto& h = head_of(m, head);
  check_tokens(batch, m.arch().vocab_size);
  const std::size_t b = batch.batch;
  if (codes.rows() != b || codes.cols() != m.arch().code_dim()) {
    throw DimensionError("decoder codes " + shape_str(codes.shape()) + " for a batch of " + std::to_string(b));
  }
  if (per_sentence) per_sentence->assign(b, 0.0);
  auto state = h.cell.zero_state(tape, b);
  std::vector<std::int32_t> prev(b, data::kSos);
  Var<T> total;
  for (std::size_t t = 0; t < batch.width; ++t) {
    const auto mask = batch.mask(t);
    if (none_set(mask)) break;
    const auto target = batch.column(t);
    auto x = concat_cols(m.dec_embed.forward(tape, prev), codes);
    state = h.cell.step(tape, x, state);
    auto logits = h.out.forward(tape, concat_cols(state.h, codes));
    std::vector<T> w(b);
    for (std::size_t i = 0; i < b; ++i) w[i] = mask[i] ? T(1) / static_cast<T>(b) : T(0);
    auto step = weighted_softmax_nll<T>(logits, target, w);
    total = total.valid() ? add(total, step) : step;
    if (per_sentence) {
      const auto& lv = logits.value();
      const std::size_t v = lv.cols();
      for (std::size_t i = 0; i < b; ++i) {
        if (!mask[i]) continue;
        const T* row = lv.raw() + i * v;
        const double mx = *std::max_element(row, row + v);
        double s = 0.0;
        for (std::size_t j = 0; j < v; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
        (*per_sentence)[i] += mx + std::log(s) - static_cast<double>(row[target[i]]);
      }
    }
    prev = target;
  }
  if (!total.valid()) throw ContractError("cannot decode an empty batch");
  return total;
}

template <typename T>
Var<T> image_nll(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes, const data::ImageBatch& batch) {
  require_image(m);
  if (batch.pixels != m.arch().pixels) throw DimensionError("image width does not match the decoder");
  BasicTensor<T> target(Shape{batch.batch, batch.pixels});
  for (std::size_t i = 0; i < batch.bits.size(); ++i) {
    if (batch.bits[i] > 1) throw ContractError("image pixels must be 0 or 1");
    target[i] = static_cast<T>(batch.bits[i]);
  }
  return sigmoid_bce(m.dec_mlp.forward_frozen(tape, codes), target);
}

template <typename T>
Var<T> generate(Tape<T>& tape, ModelBundle<T>& m, Var<T> z, nn::Mode mode, bool update_stats) {
  if (z.cols() != m.arch().z_dim) throw DimensionError("latent width mismatch: " + shape_str(z.shape()));
  return m.generator.forward(tape, z, mode, update_stats);
}

template <typename T>
Var<T> generate_frozen(Tape<T>& tape, const ModelBundle<T>& m, Var<T> z) {
  if (z.cols() != m.arch().z_dim) throw DimensionError("latent width mismatch: " + shape_str(z.shape()));
  return m.generator.forward_frozen(tape, z, nn::Mode::Eval);
}

template <typename T>
Var<T> critic_scores(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes) {
  return m.critic.forward_frozen(tape, codes);
}

template <typename T>
Var<T> classifier_logits(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes) {
  if (!m.has_classifier()) throw ConfigError("model has no code classifier");
  return m.classifier.forward_frozen(tape, codes);
}

template <typename T>
Var<T> critic_loss(Tape<T>& tape, const ModelBundle<T>& m, Var<T> real, Var<T> fake) {
  return sub(mean(critic_scores(tape, m, fake)), mean(critic_scores(tape, m, real)));
}

template <typename T>
Var<T> adversarial_loss(Tape<T>& tape, const ModelBundle<T>& m, Var<T> real, Var<T> fake, T lambda1) {
  return sub(mean(critic_scores(tape, m, scale_grad(real, lambda1))), mean(critic_scores(tape, m, fake)));
}

namespace {

std::vector<std::int32_t> checked_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows) throw ContractError("classifier needs one label per code");
  std::vector<std::int32_t> out(labels.begin(), labels.end());
  for (auto y : out) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw IndexError("label " + std::to_string(y) + " out of range");
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> classifier_loss(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes, std::span<const int> labels) {
  auto logits = classifier_logits(tape, m, codes);
  auto y = checked_labels(labels, codes.rows(), m.arch().num_classes);
  return softmax_cross_entropy<T>(logits, y);
}

template <typename T>
Var<T> flipped_classifier_loss(Tape<T>& tape, const ModelBundle<T>& m, Var<T> codes, std::span<const int> labels) {
  if (m.arch().num_classes != 2) {
    throw ConfigError("the flipped-label adversarial loss needs exactly 2 attribute values, got " +
                      std::to_string(m.arch().num_classes));
  }
  auto logits = classifier_logits(tape, m, codes);
  auto y = checked_labels(labels, codes.rows(), 2);
  for (auto& v : y) v = 1 - v;
  return softmax_cross_entropy<T>(logits, y);
}

#define ARAE_INSTANTIATE_MODEL(T)                                                                           \
  template class ModelBundle<T>;                                                                            \
  template Var<T> encode(Tape<T>&, const ModelBundle<T>&, const data::SeqBatch&);                           \
  template Var<T> encode(Tape<T>&, const ModelBundle<T>&, const data::ImageBatch&);                         \
  template Var<T> add_code_noise(Var<T>, double, SeededRng&);                                               \
  template Var<T> decoder_nll(Tape<T>&, const ModelBundle<T>&, Var<T>, const data::SeqBatch&, std::size_t, \
                              std::vector<double>*);                                                        \
  template Var<T> image_nll(Tape<T>&, const ModelBundle<T>&, Var<T>, const data::ImageBatch&);              \
  template Var<T> generate(Tape<T>&, ModelBundle<T>&, Var<T>, nn::Mode, bool);                              \
  template Var<T> generate_frozen(Tape<T>&, const ModelBundle<T>&, Var<T>);                                 \
  template Var<T> critic_scores(Tape<T>&, const ModelBundle<T>&, Var<T>);                                   \
  template Var<T> classifier_logits(Tape<T>&, const ModelBundle<T>&, Var<T>);                               \
  template Var<T> critic_loss(Tape<T>&, const ModelBundle<T>&, Var<T>, Var<T>);                             \
  template Var<T> adversarial_loss(Tape<T>&, const ModelBundle<T>&, Var<T>, Var<T>, T);                     \
  template Var<T> classifier_loss(Tape<T>&, const ModelBundle<T>&, Var<T>, std::span<const int>);           \
  template Var<T> flipped_classifier_loss(Tape<T>&, const ModelBundle<T>&, Var<T>, std::span<const int>);

ARAE_INSTANTIATE_MODEL(float)
ARAE_INSTANTIATE_MODEL(double)

// --- inference helpers ------------------------------------------------------------

namespace {

constexpr std::size_t kChunk = 256;

Tensor as_matrix(const Tensor& t, std::size_t width, const char* what) {
  if (t.rank() == 1) {
    if (t.size() != width) throw DimensionError(std::string(what) + " width mismatch: " + shape_str(t.shape()));
    return t.reshaped(Shape{1, width});
  }
  if (t.rank() != 2 || t.cols() != width) {
    throw DimensionError(std::string(what) + " width mismatch: " + shape_str(t.shape()));
  }
  return t;
}

Tensor rows_of(const Tensor& m, std::size_t begin, std::size_t end) {
  const std::size_t c = m.cols();
  std::vector<float> v(m.raw() + begin * c, m.raw() + end * c);
  return Tensor(Shape{end - begin, c}, std::move(v));
}

void copy_rows(Tensor& dst, std::size_t at, const Tensor& src) {
  std::copy(src.raw(), src.raw() + src.size(), dst.raw() + at * dst.cols());
}

template <typename Pick>
std::vector<data::Tokens> decode_rows(const Bundle& m, const Tensor& codes_in, std::size_t max_len, std::size_t head,
                                      Pick pick) {
  require_text(m);
  if (max_len == 0) throw ContractError("max_len must be at least 1");
  const auto& h = head_of(m, head);
  const Tensor codes = as_matrix(codes_in, m.arch().code_dim(), "decoder code");
  const std::size_t n = codes.rows();
  std::vector<data::Tokens> out(n);
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t end = std::min(n, begin + kChunk), b = end - begin;
    Tape<float> tape;
    auto c = tape.constant(rows_of(codes, begin, end));
    auto state = h.cell.zero_state(tape, b);
    std::vector<std::int32_t> prev(b, data::kSos);
    std::vector<bool> done(b, false);
    std::size_t remaining = b;
    for (std::size_t t = 0; t < max_len && remaining > 0; ++t) {
      state = h.cell.step(tape, concat_cols(m.dec_embed.forward(tape, prev), c), state);
      const auto& logits = h.out.forward(tape, concat_cols(state.h, c)).value();
      const std::size_t v = logits.cols();
      for (std::size_t i = 0; i < b; ++i) {
        if (done[i]) continue;
        const auto tok = pick(logits.raw() + i * v, v);
        prev[i] = tok;
        if (tok == data::kEos) {
          done[i] = true;
          --remaining;
        } else {
          out[begin + i].push_back(tok);
        }
      }
    }
  }
  return out;
}

}  // namespace

CodeVector encode_sequence(const Bundle& m, std::span<const std::int32_t> tokens) {
  if (tokens.empty()) throw ContractError("cannot encode an empty sequence");
  const data::Tokens seq(tokens.begin(), tokens.end());
  auto batch = data::make_batch(std::span<const data::Tokens>(&seq, 1));
  Tape<float> tape;
  auto code = encode(tape, m, batch).value();
  return {code.reshaped(Shape{code.size()}), CodeSource::Encoder};
}

CodeVector encode_image(const Bundle& m, std::span<const std::uint8_t> pixels) {
  data::ImageBatch batch{1, pixels.size(), std::vector<std::uint8_t>(pixels.begin(), pixels.end())};
  Tape<float> tape;
  auto code = encode(tape, m, batch).value();
  return {code.reshaped(Shape{code.size()}), CodeSource::Encoder};
}

Tensor encode_all(const Bundle& m, std::span<const data::Tokens> sequences) {
  if (sequences.empty()) throw ContractError("nothing to encode");
  Tensor out(Shape{sequences.size(), m.arch().code_dim()});
  for (std::size_t begin = 0; begin < sequences.size(); begin += kChunk) {
    const std::size_t end = std::min(sequences.size(), begin + kChunk);
    auto batch = data::make_batch(sequences.subspan(begin, end - begin));
    Tape<float> tape;
    copy_rows(out, begin, encode(tape, m, batch).value());
  }
  return out;
}

Tensor encode_all(const Bundle& m, const data::ImageCorpus& images) {
  if (images.size() == 0) throw ContractError("nothing to encode");
  Tensor out(Shape{images.size(), m.arch().code_dim()});
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < images.size(); begin += kChunk) {
    const std::size_t end = std::min(images.size(), begin + kChunk);
    idx.clear();
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    Tape<float> tape;
    copy_rows(out, begin, encode(tape, m, data::make_image_batch(images, idx)).value());
  }
  return out;
}

double decode_sequence_loss(const Bundle& m, const Tensor& code, std::span<const std::int32_t> tokens,
                            std::optional<int> head) {
  if (tokens.empty() || tokens.back() != data::kEos) throw ContractError("target sequence must end with EOS");
  if (head && *head < 0) throw ConfigError("negative attribute head");
  const data::Tokens seq(tokens.begin(), tokens.end());
  return sequence_losses(m, code, std::span<const data::Tokens>(&seq, 1), head ? static_cast<std::size_t>(*head) : 0)
      .front();
}

std::vector<double> sequence_losses(const Bundle& m, const Tensor& codes_in, std::span<const data::Tokens> sequences,
                                    std::size_t head) {
  const Tensor codes = as_matrix(codes_in, m.arch().code_dim(), "decoder code");
  if (codes.rows() != sequences.size()) throw DimensionError("one code per sequence required");
  std::vector<double> out(sequences.size());
  std::vector<double> part;
  for (std::size_t begin = 0; begin < sequences.size(); begin += kChunk) {
    const std::size_t end = std::min(sequences.size(), begin + kChunk);
    auto batch = data::make_batch(sequences.subspan(begin, end - begin));
    Tape<float> tape;
    decoder_nll(tape, m, tape.constant(rows_of(codes, begin, end)), batch, head, &part);
    std::copy(part.begin(), part.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
  }
  return out;
}

std::vector<data::Tokens> decode_greedy(const Bundle& m, const Tensor& codes, std::size_t max_len, std::size_t head) {
  return decode_rows(m, codes, max_len, head, [](const float* row, std::size_t v) {
    return static_cast<std::int32_t>(std::max_element(row, row + v) - row);
  });
}

data::Tokens decode_sequence_greedy(const Bundle& m, const Tensor& code, std::size_t max_len,
                                    std::optional<int> head) {
  if (head && *head < 0) throw ConfigError("negative attribute head");
  return decode_greedy(m, code, max_len, head ? static_cast<std::size_t>(*head) : 0).front();
}

std::vector<data::Tokens> decode_sample(const Bundle& m, const Tensor& codes, std::size_t max_len, SeededRng& rng,
                                        double temperature, std::size_t head) {
  if (!(temperature > 0)) throw ContractError("temperature must be positive");
  std::vector<double> p;
  return decode_rows(m, codes, max_len, head, [&](const float* row, std::size_t v) {
    p.resize(v);
    const double mx = *std::max_element(row, row + v);
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) s += p[j] = std::exp((row[j] - mx) / temperature);
    double u = rng.uniform() * s;
    for (std::size_t j = 0; j < v; ++j) {
      u -= p[j];
      if (u < 0) return static_cast<std::int32_t>(j);
    }
    return static_cast<std::int32_t>(v - 1);
  });
}

double decode_image_loss(const Bundle& m, const Tensor& code, std::span<const std::uint8_t> pixels) {
  data::ImageBatch batch{1, pixels.size(), std::vector<std::uint8_t>(pixels.begin(), pixels.end())};
  Tape<float> tape;
  return image_nll(tape, m, tape.constant(as_matrix(code, m.arch().code_dim(), "decoder code")), batch).value().item();
}

Tensor decode_image(const Bundle& m, const Tensor& code) {
  require_image(m);
  Tape<float> tape;
  const bool single = code.rank() == 1;
  auto c = tape.constant(as_matrix(code, m.arch().code_dim(), "decoder code"));
  Tensor probs = sigmoid(m.dec_mlp.forward_frozen(tape, c)).value();
  return single ? probs.reshaped(Shape{probs.size()}) : probs;
}

std::vector<std::uint8_t> threshold_image(const Tensor& probs) {
  std::vector<std::uint8_t> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] > 0.5f ? 1 : 0;
  return out;
}

Tensor generate_codes(const Bundle& m, const Tensor& z) {
  const Tensor zm = as_matrix(z, m.arch().z_dim, "latent");
  Tensor out(Shape{zm.rows(), m.arch().code_dim()});
  for (std::size_t begin = 0; begin < zm.rows(); begin += kChunk) {
    const std::size_t end = std::min(zm.rows(), begin + kChunk);
    Tape<float> tape;
    copy_rows(out, begin, generate_frozen(tape, m, tape.constant(rows_of(zm, begin, end))).value());
  }
  return out;
}

CodeVector generate_code(const Bundle& m, const Tensor& z, nn::Mode mode) {
  const bool single = z.rank() == 1;
  const Tensor zm = as_matrix(z, m.arch().z_dim, "latent");
  Tape<float> tape;
  Tensor c = m.generator.forward_frozen(tape, tape.constant(zm), mode).value();
  return {single ? c.reshaped(Shape{c.size()}) : c, CodeSource::Generator};
}

double critic_score(const Bundle& m, const Tensor& code) {
  Tape<float> tape;
  return critic_scores(tape, m, tape.constant(as_matrix(code, m.arch().code_dim(), "critic input"))).value()[0];
}

Tensor classify_code(const Bundle& m, const Tensor& code) {
  const bool single = code.rank() == 1;
  Tape<float> tape;
  auto logits = classifier_logits(tape, m, tape.constant(as_matrix(code, m.arch().code_dim(), "classifier input")));
  Tensor p = softmax_rows(logits.value());
  return single ? p.reshaped(Shape{p.size()}) : p;
}

}  // namespace arae
