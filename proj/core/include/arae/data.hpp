#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "arae/rng.hpp"

namespace arae::data {

inline constexpr std::int32_t kPad = 0;
inline constexpr std::int32_t kSos = 1;
inline constexpr std::int32_t kEos = 2;
inline constexpr std::int32_t kUnk = 3;
inline constexpr std::int32_t kNumReserved = 4;

using Tokens = std::vector<std::int32_t>;

/// Lowercases (ASCII) and splits on whitespace.
std::vector<std::string> tokenize(std::string_view line);

/// Token <-> index map. Indices 0..3 are PAD, SOS, EOS, UNK; the remaining
/// entries are ordered by descending count, ties broken lexicographically.
class Vocabulary {
 public:
  Vocabulary();

  static Vocabulary build(std::span<const std::string> lines, std::size_t min_count = 1);
  /// Vocabulary file: one token per line in index order, the first four lines
  /// being the reserved tokens.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  std::int32_t index(std::string_view token) const;
  const std::string& token(std::int32_t index) const;
  bool contains(std::string_view token) const { return index_.contains(std::string(token)); }

  /// Tokenised line followed by EOS; unknown tokens map to UNK.
  Tokens encode(std::string_view line) const;
  /// Space-joined content tokens; stops at EOS and skips PAD/SOS.
  std::string decode(std::span<const std::int32_t> ids) const;

  /// FNV-1a over the tokens in index order.
  std::uint64_t hash() const noexcept { return hash_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::uint64_t hash_ = 0;
};

struct SequenceCorpus {
  std::vector<Tokens> sequences;  // each ends with EOS
  std::vector<int> labels;        // empty when unlabeled
  std::size_t max_len = 0;        // content tokens, EOS excluded
  std::size_t dropped = 0;

  std::size_t size() const noexcept { return sequences.size(); }
  bool labeled() const noexcept { return !labels.empty(); }
  SequenceCorpus subset(std::span<const std::size_t> indices) const;
  /// Indices of sequences carrying `label`.
  std::vector<std::size_t> indices_with_label(int label) const;
};

std::vector<std::string> read_lines(const std::filesystem::path& path);

/// One sentence per line. Lines with more than max_len tokens are dropped and
/// counted in `dropped`.
SequenceCorpus load_text_corpus(const std::filesystem::path& path, const Vocabulary& vocab,
                                std::size_t max_len);

/// Names of the `<attr>.txt` files in a directory, sorted; label i is the i-th name.
std::vector<std::string> attribute_names(const std::filesystem::path& dir);
/// Concatenation of every `<attr>.txt` in `dir` with labels by sorted name.
SequenceCorpus load_attribute_corpus(const std::filesystem::path& dir, const Vocabulary& vocab,
                                     std::size_t max_len);
/// All lines of a text file or of every `<attr>.txt` in a directory.
std::vector<std::string> read_corpus_lines(const std::filesystem::path& path);

// --- images -------------------------------------------------------------------

struct ImageCorpus {
  std::size_t pixels = 0;
  std::vector<std::vector<std::uint8_t>> images;  // values in {0,1}

  std::size_t size() const noexcept { return images.size(); }
};

/// Reads the "BIMG" format (magic, u32 count, u32 n, then count*n bits packed
/// row-major, MSB first, little-endian header) or a CSV of 0/1 values with one
/// image per line. When expected_pixels is non-zero a mismatch raises ConfigError.
ImageCorpus load_binary_images(const std::filesystem::path& path, std::size_t expected_pixels = 0);
void save_binary_images(const std::filesystem::path& path, const ImageCorpus& corpus);

/// Binarised side x side images of one or two random horizontal/vertical bars.
ImageCorpus synth_images(std::size_t count, std::size_t side, SeededRng& rng);

// --- synthetic attribute grammar -------------------------------------------------

/// Lexicons of the built-in two-attribute template grammar. Sentences follow
///   the [very] ADJ NOUN VERB [the NOUN] [ADV]
/// with ADJ drawn from the lexicon of the sentence's attribute.
struct SentimentGrammar {
  std::vector<std::string> adjectives[2];
  std::vector<std::string> nouns;
  std::vector<std::string> verbs;
  std::vector<std::string> adverbs;
  std::vector<std::string> function_words;

  /// Attribute whose adjective appears in the sentence, or -1.
  int attribute_of(std::span<const std::string> words) const;
  /// 0 if the subject noun is an animal, 1 if a person, -1 if no noun.
  int subject_class(std::span<const std::string> words) const;
  bool matches_template(std::span<const std::string> words) const;
  /// Every word of the grammar, each exactly once.
  std::vector<std::string> lexicon() const;
};

const SentimentGrammar& sentiment_grammar();

struct SynthCorpus {
  Vocabulary vocab;
  SequenceCorpus corpus;  // labeled by attribute
  std::vector<std::string> lines;
};

/// Grammar id "sentiment". Labels alternate so the classes are balanced; the
/// vocabulary is built from the grammar lexicon so it is identical for every
/// size and seed.
SynthCorpus synth_corpus(std::string_view grammar_id, std::size_t size, SeededRng& rng);

// --- batching ---------------------------------------------------------------------

/// Padded batch. tokens is [batch x width], PAD beyond each sequence's length.
struct SeqBatch {
  std::size_t batch = 0;
  std::size_t width = 0;
  std::vector<std::int32_t> tokens;
  std::vector<std::size_t> lengths;  // including EOS
  std::vector<int> labels;           // empty when unlabeled

  std::vector<std::int32_t> column(std::size_t t) const;
  /// 1 where t < length.
  std::vector<std::uint8_t> mask(std::size_t t) const;
  Tokens sequence(std::size_t row) const;
};

SeqBatch make_batch(std::span<const Tokens> sequences, std::span<const int> labels = {});
SeqBatch make_batch(const SequenceCorpus& corpus, std::span<const std::size_t> indices);

/// Images as a [batch x pixels] block of 0/1 values.
struct ImageBatch {
  std::size_t batch = 0;
  std::size_t pixels = 0;
  std::vector<std::uint8_t> bits;
};

ImageBatch make_image_batch(const ImageCorpus& corpus, std::span<const std::size_t> indices);

/// Epoch-wise shuffled batches over a corpus.
class BatchIterator {
 public:
  BatchIterator(const SequenceCorpus& corpus, std::size_t batch_size, SeededRng rng);

  /// Fills the next batch of the current epoch; false when the epoch is done.
  bool next(SeqBatch& out);
  /// Reshuffles and restarts.
  void start_epoch();
  std::size_t batches_per_epoch() const;

 private:
  const SequenceCorpus* corpus_;
  std::size_t batch_size_;
  SeededRng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace arae::data
