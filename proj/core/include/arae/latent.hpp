#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "arae/model.hpp"

namespace arae::latent {

/// z0 + lambda (z1 - z0) for lambda = 0, 1/(steps-1), ..., 1. Endpoints are
/// returned exactly.
std::vector<Tensor> interpolate(const Tensor& z0, const Tensor& z1, std::size_t steps);

struct OffsetVector {
  Tensor t;
  std::string from;
  std::string to;
  std::string slot;
};

/// mean(b) - mean(a) over the rows of two [n x d] sets, each needing at least
/// `floor` rows.
OffsetVector build_offset(const Tensor& a, const Tensor& b, std::size_t floor = 10);

/// Fraction of candidate content tokens found in the reference, with counts
/// clipped as in BLEU. PAD/SOS/EOS are ignored; an empty candidate scores 0.
double unigram_precision(std::span<const std::int32_t> candidate, std::span<const std::int32_t> reference);

struct ArithmeticResult {
  bool match = false;
  double precision = 0;  // mean over matching samples, 0 when none match
  data::Tokens original;  // greedy decode of g(z)
  std::vector<data::Tokens> samples;
};

/// Samples n_samples sentences from the decoder at g(z + t) by per-step
/// multinomial sampling. A sample matches when `has_target` accepts it.
ArithmeticResult apply_offset_and_score(const Bundle& m, const Tensor& z, const Tensor& t, std::size_t n_samples,
                                        SeededRng& rng, const std::function<bool(const data::Tokens&)>& has_target,
                                        std::size_t max_len);

struct CodeGaussian {
  Tensor mean;        // [d]
  Tensor covariance;  // [d x d], ridge included
  Tensor cholesky;    // lower triangular factor of `covariance`
  bool diagonal = false;
};

inline constexpr double kCodeRidge = 1e-6;

/// Maximum-likelihood fit plus kCodeRidge * I. With fewer than d + 1 codes (or
/// a factorisation failure) the covariance falls back to its diagonal and a
/// warning is issued.
CodeGaussian fit_code_gaussian(const Tensor& codes);
Tensor sample_code(const CodeGaussian& g, SeededRng& rng);
/// [n x d]
Tensor sample_codes(const CodeGaussian& g, std::size_t n, SeededRng& rng);

/// Code dump: u32 d_code, u32 count, then count * d_code little-endian f32.
void write_code_dump(const std::filesystem::path& path, const Tensor& codes);
Tensor read_code_dump(const std::filesystem::path& path);

}  // namespace arae::latent
