#include "arae/rng.hpp"

#include <cmath>
#include <numbers>

namespace arae {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& w : s_) w = splitmix64(x);
}

SeededRng::result_type SeededRng::operator()() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double SeededRng::uniform() noexcept {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw ContractError("SeededRng::below needs n > 0");
  // Rejection on the largest multiple of n.
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t v;
  do {
    v = (*this)();
  } while (v >= limit);
  return v % n;
}

double SeededRng::normal() noexcept {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return r * std::cos(theta);
}

template <typename T>
BasicTensor<T> SeededRng::normal_tensor(Shape shape, double mean, double stddev) {
  BasicTensor<T> out(std::move(shape));
  for (auto& v : out.data()) v = static_cast<T>(mean + stddev * normal());
  return out;
}

template <typename T>
BasicTensor<T> SeededRng::uniform_tensor(Shape shape, double lo, double hi) {
  BasicTensor<T> out(std::move(shape));
  for (auto& v : out.data()) v = static_cast<T>(uniform(lo, hi));
  return out;
}

SeededRng SeededRng::fork() { return SeededRng((*this)()); }

template BasicTensor<float> SeededRng::normal_tensor<float>(Shape, double, double);
template BasicTensor<double> SeededRng::normal_tensor<double>(Shape, double, double);
template BasicTensor<float> SeededRng::uniform_tensor<float>(Shape, double, double);
template BasicTensor<double> SeededRng::uniform_tensor<double>(Shape, double, double);

}  // namespace arae
