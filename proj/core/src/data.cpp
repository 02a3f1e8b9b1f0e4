#include "arae/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace arae::data {

namespace fs = std::filesystem;

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// --- Vocabulary -----------------------------------------------------------------

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> r{"<pad>", "<sos>", "<eos>", "<unk>"};
  return r;
}

std::uint64_t fnv1a(const std::vector<std::string>& tokens) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0x0a;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(reserved_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw FormatError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
  hash_ = fnv1a(tokens_);
}

Vocabulary Vocabulary::build(std::span<const std::string> lines, std::size_t min_count) {
  if (min_count < 1) throw ContractError("min_count must be >= 1");
  if (lines.empty()) throw ContractError("cannot build a vocabulary from empty input");
  std::map<std::string, std::size_t> counts;
  for (const auto& line : lines) {
    for (auto& tok : tokenize(line)) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n < min_count) continue;
    if (std::find(reserved_tokens().begin(), reserved_tokens().end(), tok) != reserved_tokens().end()) continue;
    kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens = reserved_tokens();
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const fs::path& path) {
  auto lines = read_lines(path);
  if (lines.size() < reserved_tokens().size() ||
      !std::equal(reserved_tokens().begin(), reserved_tokens().end(), lines.begin())) {
    throw FormatError("vocabulary file " + path.string() + " lacks the reserved header");
  }
  return Vocabulary(std::move(lines));
}

void Vocabulary::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::int32_t Vocabulary::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::int32_t i) const {
  if (i < 0 || static_cast<std::size_t>(i) >= tokens_.size()) {
    throw IndexError("token index " + std::to_string(i) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(i)];
}

Tokens Vocabulary::encode(std::string_view line) const {
  Tokens out;
  for (const auto& tok : tokenize(line)) out.push_back(index(tok));
  out.push_back(kEos);
  return out;
}

std::string Vocabulary::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (auto id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kSos) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

// --- corpora ---------------------------------------------------------------------

SequenceCorpus SequenceCorpus::subset(std::span<const std::size_t> indices) const {
  SequenceCorpus out;
  out.max_len = max_len;
  for (auto i : indices) {
    out.sequences.push_back(sequences.at(i));
    if (labeled()) out.labels.push_back(labels.at(i));
  }
  return out;
}

std::vector<std::size_t> SequenceCorpus::indices_with_label(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

namespace {

void append_lines(SequenceCorpus& corpus, const std::vector<std::string>& lines, const Vocabulary& vocab,
                  int label) {
  for (const auto& line : lines) {
    auto seq = vocab.encode(line);
    if (seq.size() == 1) continue;  // blank line
    if (seq.size() - 1 > corpus.max_len) {
      ++corpus.dropped;
      continue;
    }
    corpus.sequences.push_back(std::move(seq));
    if (label >= 0) corpus.labels.push_back(label);
  }
}

}  // namespace

SequenceCorpus load_text_corpus(const fs::path& path, const Vocabulary& vocab, std::size_t max_len) {
  SequenceCorpus corpus;
  corpus.max_len = max_len;
  append_lines(corpus, read_lines(path), vocab, -1);
  return corpus;
}

std::vector<std::string> attribute_names(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") names.push_back(entry.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw IoError("no <attr>.txt files in " + dir.string());
  return names;
}

SequenceCorpus load_attribute_corpus(const fs::path& dir, const Vocabulary& vocab, std::size_t max_len) {
  SequenceCorpus corpus;
  corpus.max_len = max_len;
  const auto names = attribute_names(dir);
  for (std::size_t i = 0; i < names.size(); ++i) {
    append_lines(corpus, read_lines(dir / (names[i] + ".txt")), vocab, static_cast<int>(i));
  }
  return corpus;
}

std::vector<std::string> read_corpus_lines(const fs::path& path) {
  if (!fs::is_directory(path)) return read_lines(path);
  std::vector<std::string> all;
  for (const auto& name : attribute_names(path)) {
    auto lines = read_lines(path / (name + ".txt"));
    all.insert(all.end(), lines.begin(), lines.end());
  }
  return all;
}

// --- images ----------------------------------------------------------------------

namespace {

constexpr char kImageMagic[4] = {'B', 'I', 'M', 'G'};

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

ImageCorpus parse_csv_images(const fs::path& path) {
  ImageCorpus corpus;
  for (const auto& line : read_lines(path)) {
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::uint8_t> img;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      const std::string v = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      if (v != "0" && v != "1") throw FormatError("image CSV value '" + v + "' is not 0 or 1 in " + path.string());
      img.push_back(v == "1" ? 1 : 0);
    }
    if (corpus.pixels == 0) corpus.pixels = img.size();
    if (img.size() != corpus.pixels) throw FormatError("ragged image CSV rows in " + path.string());
    corpus.images.push_back(std::move(img));
  }
  if (corpus.images.empty()) throw FormatError("no images in " + path.string());
  return corpus;
}

}  // namespace

ImageCorpus load_binary_images(const fs::path& path, std::size_t expected_pixels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  ImageCorpus corpus;
  if (in.gcount() == 4 && std::equal(magic, magic + 4, kImageMagic)) {
    std::uint32_t count = 0, n = 0;
    if (!get_u32(in, count) || !get_u32(in, n) || n == 0) {
      throw FormatError("malformed BIMG header in " + path.string());
    }
    corpus.pixels = n;
    const std::uint64_t bits = static_cast<std::uint64_t>(count) * n;
    std::vector<unsigned char> packed((bits + 7) / 8);
    if (!in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()))) {
      throw CorruptionError("truncated BIMG payload in " + path.string());
    }
    corpus.images.assign(count, std::vector<std::uint8_t>(n));
    for (std::uint64_t b = 0; b < bits; ++b) {
      corpus.images[b / n][b % n] = (packed[b / 8] >> (7 - b % 8)) & 1;
    }
  } else if (magic[0] == '0' || magic[0] == '1' || magic[0] == ' ') {
    in.close();
    corpus = parse_csv_images(path);
  } else {
    throw FormatError("unrecognised image file " + path.string());
  }
  if (expected_pixels != 0 && corpus.pixels != expected_pixels) {
    throw ConfigError("image size " + std::to_string(corpus.pixels) + " does not match configured " +
                      std::to_string(expected_pixels));
  }
  return corpus;
}

void save_binary_images(const fs::path& path, const ImageCorpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kImageMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(corpus.images.size()));
  put_u32(out, static_cast<std::uint32_t>(corpus.pixels));
  const std::uint64_t bits = static_cast<std::uint64_t>(corpus.images.size()) * corpus.pixels;
  std::vector<unsigned char> packed((bits + 7) / 8, 0);
  for (std::uint64_t b = 0; b < bits; ++b) {
    if (corpus.images[b / corpus.pixels][b % corpus.pixels]) packed[b / 8] |= static_cast<unsigned char>(1u << (7 - b % 8));
  }
  out.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
}

ImageCorpus synth_images(std::size_t count, std::size_t side, SeededRng& rng) {
  if (side < 2) throw ConfigError("synthetic images need side >= 2");
  ImageCorpus corpus;
  corpus.pixels = side * side;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::uint8_t> img(corpus.pixels, 0);
    const std::size_t bars = 1 + rng.below(2);
    for (std::size_t b = 0; b < bars; ++b) {
      const bool horizontal = rng.below(2) == 0;
      const std::size_t at = rng.below(side);
      for (std::size_t k = 0; k < side; ++k) img[horizontal ? at * side + k : k * side + at] = 1;
    }
    corpus.images.push_back(std::move(img));
  }
  return corpus;
}

// --- synthetic grammar -------------------------------------------------------------

const SentimentGrammar& sentiment_grammar() {
  static const SentimentGrammar g{
      {{"good", "great", "fine"}, {"bad", "awful", "poor"}},
      {"cat", "dog", "bird", "man", "woman", "child"},
      {"sees", "likes", "finds", "hears"},
      {"today", "again", "now"},
      {"the", "very"},
  };
  return g;
}

namespace {

bool in(const std::vector<std::string>& set, const std::string& w) {
  return std::find(set.begin(), set.end(), w) != set.end();
}

}  // namespace

int SentimentGrammar::attribute_of(std::span<const std::string> words) const {
  for (const auto& w : words) {
    for (int a = 0; a < 2; ++a) {
      if (in(adjectives[a], w)) return a;
    }
  }
  return -1;
}

int SentimentGrammar::subject_class(std::span<const std::string> words) const {
  for (const auto& w : words) {
    auto it = std::find(nouns.begin(), nouns.end(), w);
    if (it != nouns.end()) return it - nouns.begin() < 3 ? 0 : 1;
  }
  return -1;
}

bool SentimentGrammar::matches_template(std::span<const std::string> w) const {
  auto adj = [&](const std::string& s) { return in(adjectives[0], s) || in(adjectives[1], s); };
  std::size_t i = 0;
  if (w.size() < 5 || w[i++] != "the") return false;
  if (w[i] == "very") ++i;
  const bool has_very = i == 2;
  if (i + 3 > w.size() || !adj(w[i]) || !in(nouns, w[i + 1]) || !in(verbs, w[i + 2])) return false;
  i += 3;
  const std::size_t rest = w.size() - i;
  if (rest == 1) return !has_very && in(adverbs, w[i]);               // the ADJ NOUN VERB ADV
  if (rest == 2) return !has_very && w[i] == "the" && in(nouns, w[i + 1]);  // ... the NOUN
  if (rest == 3) return w[i] == "the" && in(nouns, w[i + 1]) && in(adverbs, w[i + 2]);
  return false;
}

std::vector<std::string> SentimentGrammar::lexicon() const {
  std::vector<std::string> all;
  for (const auto* set : {&adjectives[0], &adjectives[1], &nouns, &verbs, &adverbs, &function_words}) {
    all.insert(all.end(), set->begin(), set->end());
  }
  return all;
}

SynthCorpus synth_corpus(std::string_view grammar_id, std::size_t size, SeededRng& rng) {
  if (grammar_id != "sentiment") throw ConfigError("unknown grammar id '" + std::string(grammar_id) + "'");
  const auto& g = sentiment_grammar();
  SynthCorpus out;
  const auto lexicon = g.lexicon();
  out.vocab = Vocabulary::build(lexicon, 1);
  out.corpus.max_len = 8;
  auto pick = [&](const std::vector<std::string>& set) -> const std::string& { return set[rng.below(set.size())]; };
  for (std::size_t i = 0; i < size; ++i) {
    const int label = static_cast<int>(i % 2);
    const auto shape = rng.below(4);
    std::string s = "the ";
    if (shape == 2) s += "very ";
    s += pick(g.adjectives[label]) + " " + pick(g.nouns) + " " + pick(g.verbs);
    if (shape != 3) s += " the " + pick(g.nouns);
    if (shape != 0) s += " " + pick(g.adverbs);
    out.corpus.sequences.push_back(out.vocab.encode(s));
    out.corpus.labels.push_back(label);
    out.lines.push_back(std::move(s));
  }
  return out;
}

// --- batching ------------------------------------------------------------------------

std::vector<std::int32_t> SeqBatch::column(std::size_t t) const {
  std::vector<std::int32_t> col(batch);
  for (std::size_t r = 0; r < batch; ++r) col[r] = tokens[r * width + t];
  return col;
}

std::vector<std::uint8_t> SeqBatch::mask(std::size_t t) const {
  std::vector<std::uint8_t> m(batch);
  for (std::size_t r = 0; r < batch; ++r) m[r] = t < lengths[r] ? 1 : 0;
  return m;
}

Tokens SeqBatch::sequence(std::size_t row) const {
  return Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(row * width),
                tokens.begin() + static_cast<std::ptrdiff_t>(row * width + lengths[row]));
}

SeqBatch make_batch(std::span<const Tokens> sequences, std::span<const int> labels) {
  if (sequences.empty()) throw ContractError("cannot batch zero sequences");
  SeqBatch b;
  b.batch = sequences.size();
  for (const auto& s : sequences) {
    if (s.empty()) throw ContractError("cannot batch an empty sequence");
    b.width = std::max(b.width, s.size());
  }
  b.tokens.assign(b.batch * b.width, kPad);
  for (std::size_t r = 0; r < b.batch; ++r) {
    std::copy(sequences[r].begin(), sequences[r].end(), b.tokens.begin() + static_cast<std::ptrdiff_t>(r * b.width));
    b.lengths.push_back(sequences[r].size());
  }
  b.labels.assign(labels.begin(), labels.end());
  return b;
}

SeqBatch make_batch(const SequenceCorpus& corpus, std::span<const std::size_t> indices) {
  std::vector<Tokens> seqs;
  std::vector<int> labels;
  seqs.reserve(indices.size());
  for (auto i : indices) {
    seqs.push_back(corpus.sequences.at(i));
    if (corpus.labeled()) labels.push_back(corpus.labels.at(i));
  }
  return make_batch(seqs, labels);
}

ImageBatch make_image_batch(const ImageCorpus& corpus, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("cannot batch zero images");
  ImageBatch b;
  b.batch = indices.size();
  b.pixels = corpus.pixels;
  b.bits.reserve(b.batch * b.pixels);
  for (auto i : indices) {
    const auto& img = corpus.images.at(i);
    b.bits.insert(b.bits.end(), img.begin(), img.end());
  }
  return b;
}

BatchIterator::BatchIterator(const SequenceCorpus& corpus, std::size_t batch_size, SeededRng rng)
    : corpus_(&corpus), batch_size_(batch_size), rng_(rng) {
  if (batch_size_ == 0) throw ContractError("batch size must be >= 1");
  if (corpus.size() == 0) throw ContractError("cannot iterate an empty corpus");
  start_epoch();
}

void BatchIterator::start_epoch() {
  order_.resize(corpus_->size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  rng_.shuffle(order_.begin(), order_.end());
  pos_ = 0;
}

bool BatchIterator::next(SeqBatch& out) {
  if (pos_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), pos_ + batch_size_);
  out = make_batch(*corpus_, std::span<const std::size_t>(order_.data() + pos_, end - pos_));
  pos_ = end;
  return true;
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (corpus_->size() + batch_size_ - 1) / batch_size_;
}

}  // namespace arae::data
