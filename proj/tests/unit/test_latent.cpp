#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <fstream>
#include <set>

#include "arae/latent.hpp"
#include "test_util.hpp"

using namespace arae;
using namespace arae::latent;

TEST(Interpolate, EndpointsAndMidpoint) {
  const auto z0 = Tensor::vector({0, 0}), z1 = Tensor::vector({2, 4});
  const auto path = interpolate(z0, z1, 3);
  ASSERT_EQ(path.size(), 3u);
  EXPECT_EQ(path.front(), z0);
  EXPECT_EQ(path.back(), z1);
  EXPECT_EQ(path[1], Tensor::vector({1, 2}));
  EXPECT_THROW(interpolate(z0, z1, 1), ContractError);
  EXPECT_THROW(interpolate(z0, Tensor::vector({1}), 3), DimensionError);
}

TEST(Interpolate, DecodedPathEndpointsMatchDirectDecodes) {
  Bundle b(test::tiny_text_arch(), 4);
  SeededRng rng(1);
  const auto z = rng.normal_tensor<float>(Shape{2, 3});
  const auto path = interpolate(z.row(0), z.row(1), 5);
  std::set<data::Tokens> distinct;
  std::vector<data::Tokens> decoded;
  for (const auto& p : path) {
    decoded.push_back(decode_greedy(b, generate_codes(b, p.reshaped(Shape{1, 3})), 10).front());
    distinct.insert(decoded.back());
  }
  const auto direct = decode_greedy(b, generate_codes(b, z), 10);
  EXPECT_EQ(decoded.front(), direct[0]);
  EXPECT_EQ(decoded.back(), direct[1]);
  EXPECT_GE(distinct.size(), 1u);
  EXPECT_LE(distinct.size(), 5u);
}

TEST(Offset, MeanDifferenceAndFloor) {
  const auto o = build_offset(Tensor::matrix({{0, 0}}), Tensor::matrix({{1, 2}}), 1);
  EXPECT_EQ(o.t, Tensor::vector({1, 2}));
  const auto a = Tensor::matrix({{1, 3}, {-1, 5}});
  const auto same = build_offset(a, a, 2);
  for (float v : same.t.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(build_offset(a, a, 3), InsufficientDataError);
  EXPECT_THROW(build_offset(a, Tensor::matrix({{1, 2, 3}, {4, 5, 6}}), 2), DimensionError);
}

TEST(UnigramPrecision, ClippedCounts) {
  const data::Tokens ref{5, 6, 7, data::kEos};
  EXPECT_DOUBLE_EQ(unigram_precision(ref, ref), 1.0);
  const data::Tokens cand{5, 5, 8, data::kEos};
  EXPECT_DOUBLE_EQ(unigram_precision(cand, ref), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(unigram_precision(data::Tokens{data::kEos}, ref), 0.0);
}

TEST(ApplyOffset, ZeroOffsetOnPeakedDecoderRepeatsTheOriginal) {
  // Output layer so confident that sampling is effectively greedy.
  Bundle b(test::tiny_text_arch(), 2);
  for (auto& h : b.heads) {
    h.out.weight.value.fill(0);
    h.out.bias.value.fill(0);
    h.out.bias.value[5] = 80;
  }
  SeededRng rng(3);
  const auto z = rng.normal_tensor<float>(Shape{3});
  const Tensor zero(Shape{3});
  auto has5 = [](const data::Tokens& s) { return std::find(s.begin(), s.end(), 5) != s.end(); };
  const auto r = apply_offset_and_score(b, z, zero, 20, rng, has5, 4);
  ASSERT_EQ(r.samples.size(), 20u);
  for (const auto& s : r.samples) EXPECT_EQ(s, r.original);
  EXPECT_TRUE(r.match);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);

  auto never = [](const data::Tokens&) { return false; };
  const auto n = apply_offset_and_score(b, z, zero, 5, rng, never, 4);
  EXPECT_FALSE(n.match);
  EXPECT_EQ(n.precision, 0.0);
  EXPECT_THROW(apply_offset_and_score(b, z, Tensor(Shape{2}), 5, rng, never, 4), DimensionError);
}

TEST(CodeGaussian, TwoPointFit) {
  const auto g = fit_code_gaussian(Tensor::matrix({{1, 0}, {-1, 0}, {1, 0}, {-1, 0}}));
  EXPECT_EQ(g.mean, Tensor::vector({0, 0}));
  EXPECT_FALSE(g.diagonal);
  EXPECT_NEAR(g.covariance.at(0, 0), 1.0 + kCodeRidge, 1e-7);
  EXPECT_NEAR(g.covariance.at(1, 1), kCodeRidge, 1e-9);
  EXPECT_EQ(g.covariance.at(0, 1), 0.0f);
}

TEST(CodeGaussian, SingleCodeFallsBackToDiagonal) {
  test::WarningCapture warnings;
  const auto g = fit_code_gaussian(Tensor::matrix({{0.5, -0.5}}));
  EXPECT_TRUE(g.diagonal);
  EXPECT_EQ(warnings.messages.size(), 1u);
  EXPECT_NEAR(g.covariance.at(0, 0), kCodeRidge, 1e-9);
}

TEST(CodeGaussian, SampleMeanWithinThreeStandardErrors) {
  SeededRng data_rng(4);
  auto codes = data_rng.normal_tensor<float>(Shape{500, 3});
  for (std::size_t i = 0; i < 500; ++i) {
    codes.at(i, 0) = 2 * codes.at(i, 0) + 1;
    codes.at(i, 1) += 0.5f * codes.at(i, 0);
  }
  const auto g = fit_code_gaussian(codes);
  SeededRng rng(5);
  const std::size_t n = 100000;
  const auto s = sample_codes(g, n, rng);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < n; ++i) m += s.at(i, j);
    m /= n;
    EXPECT_LT(std::abs(m - g.mean[j]), 3 * std::sqrt(g.covariance.at(j, j) / n)) << j;
  }
  // L Lᵀ reproduces the covariance.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double v = 0;
      for (std::size_t k = 0; k < 3; ++k) v += g.cholesky.at(i, k) * g.cholesky.at(j, k);
      EXPECT_NEAR(v, g.covariance.at(i, j), 1e-5);
    }
  EXPECT_EQ(sample_code(g, rng).size(), 3u);
}

TEST(CodeDump, RoundTripAndTruncation) {
  test::TempDir dir;
  const auto codes = Tensor::matrix({{1, 2, 3}, {-4, 5.5, 0}});
  write_code_dump(dir.path / "c.bin", codes);
  EXPECT_EQ(read_code_dump(dir.path / "c.bin"), codes);
  EXPECT_EQ(std::filesystem::file_size(dir.path / "c.bin"), 8u + 6u * 4u);
  std::ofstream(dir.path / "t.bin", std::ios::binary) << std::string("\x03\x00\x00\x00\x02\x00\x00\x00", 8);
  EXPECT_THROW(read_code_dump(dir.path / "t.bin"), CorruptionError);
}
