#include "arae/latent.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstring>
#include <fstream>
#include <map>

#include "arae/log.hpp"

namespace arae::latent {

std::vector<Tensor> interpolate(const Tensor& z0, const Tensor& z1, std::size_t steps) {
  if (steps < 2) throw ContractError("interpolation needs at least 2 steps");
  if (z0.shape() != z1.shape()) throw DimensionError("interpolation endpoints differ in shape");
  std::vector<Tensor> out;
  out.reserve(steps);
  out.push_back(z0);
  for (std::size_t s = 1; s + 1 < steps; ++s) {
    const double lambda = static_cast<double>(s) / static_cast<double>(steps - 1);
    Tensor z(z0.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = static_cast<float>(lambda * z1[i] + (1.0 - lambda) * z0[i]);
    }
    out.push_back(std::move(z));
  }
  out.push_back(z1);
  return out;
}

namespace {

std::vector<double> column_means(const Tensor& x) {
  std::vector<double> m(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) m[j] += x.at(i, j);
  }
  for (auto& v : m) v /= static_cast<double>(x.rows());
  return m;
}

}  // namespace

OffsetVector build_offset(const Tensor& a, const Tensor& b, std::size_t floor) {
  if (a.empty() || b.empty() || a.rows() < floor || b.rows() < floor) {
    throw InsufficientDataError("offset needs at least " + std::to_string(floor) + " codes per side, got " +
                                std::to_string(a.empty() ? 0 : a.rows()) + " and " +
                                std::to_string(b.empty() ? 0 : b.rows()));
  }
  if (a.cols() != b.cols()) throw DimensionError("offset sets differ in width");
  const auto ma = column_means(a), mb = column_means(b);
  OffsetVector o;
  o.t = Tensor(Shape{a.cols()});
  for (std::size_t j = 0; j < a.cols(); ++j) o.t[j] = static_cast<float>(mb[j] - ma[j]);
  return o;
}

double unigram_precision(std::span<const std::int32_t> candidate, std::span<const std::int32_t> reference) {
  auto content = [](std::int32_t id) { return id != data::kPad && id != data::kSos && id != data::kEos; };
  std::map<std::int32_t, int> ref;
  for (auto id : reference) {
    if (content(id)) ++ref[id];
  }
  std::size_t total = 0, hit = 0;
  for (auto id : candidate) {
    if (!content(id)) continue;
    ++total;
    auto it = ref.find(id);
    if (it != ref.end() && it->second > 0) {
      --it->second;
      ++hit;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

ArithmeticResult apply_offset_and_score(const Bundle& m, const Tensor& z, const Tensor& t, std::size_t n_samples,
                                        SeededRng& rng, const std::function<bool(const data::Tokens&)>& has_target,
                                        std::size_t max_len) {
  if (n_samples < 1) throw ContractError("need at least one sample");
  if (z.size() != t.size()) throw DimensionError("offset width does not match the latent");
  ArithmeticResult res;
  const Tensor base = z.reshaped(Shape{1, z.size()});
  res.original = decode_greedy(m, generate_codes(m, base), max_len).front();

  Tensor shifted = base;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += t[i];
  const Tensor code = generate_codes(m, shifted);
  Tensor codes(Shape{n_samples, code.cols()});
  for (std::size_t r = 0; r < n_samples; ++r) {
    std::copy(code.raw(), code.raw() + code.cols(), codes.raw() + r * code.cols());
  }
  res.samples = decode_sample(m, codes, max_len, rng);
  std::size_t matches = 0;
  for (const auto& s : res.samples) {
    if (!has_target(s)) continue;
    ++matches;
    res.precision += unigram_precision(s, res.original);
  }
  res.match = matches > 0;
  if (matches) res.precision /= static_cast<double>(matches);
  return res;
}

CodeGaussian fit_code_gaussian(const Tensor& codes) {
  if (codes.empty() || codes.rank() != 2) throw ContractError("fit_code_gaussian needs a [n x d] code matrix");
  const std::size_t n = codes.rows(), d = codes.cols();
  const auto mu = column_means(codes);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::VectorXd x(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x[static_cast<Eigen::Index>(j)] = codes.at(i, j) - mu[j];
    cov.noalias() += x * x.transpose();
  }
  cov /= static_cast<double>(n);

  CodeGaussian g;
  g.mean = Tensor(Shape{d});
  for (std::size_t j = 0; j < d; ++j) g.mean[j] = static_cast<float>(mu[j]);

  bool diagonal = n < d + 1;
  if (diagonal) {
    warn("only " + std::to_string(n) + " codes for a " + std::to_string(d) +
         "-dimensional Gaussian; using a diagonal covariance");
  }
  Eigen::MatrixXd full = cov + kCodeRidge * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
  Eigen::MatrixXd lower;
  if (!diagonal) {
    Eigen::LLT<Eigen::MatrixXd> llt(full);
    if (llt.info() == Eigen::Success) {
      lower = llt.matrixL();
    } else {
      warn("code covariance is not positive definite; using a diagonal covariance");
      diagonal = true;
    }
  }
  if (diagonal) {
    full = Eigen::MatrixXd(full.diagonal().asDiagonal());
    lower = Eigen::MatrixXd(full.diagonal().cwiseSqrt().asDiagonal());
  }
  g.diagonal = diagonal;
  g.covariance = Tensor(Shape{d, d});
  g.cholesky = Tensor(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      g.covariance.at(i, j) = static_cast<float>(full(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      g.cholesky.at(i, j) = static_cast<float>(lower(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  return g;
}

Tensor sample_codes(const CodeGaussian& g, std::size_t n, SeededRng& rng) {
  const std::size_t d = g.mean.size();
  Tensor out(Shape{n, d});
  std::vector<double> e(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (auto& v : e) v = rng.normal();
    for (std::size_t i = 0; i < d; ++i) {
      double s = g.mean[i];
      for (std::size_t j = 0; j <= i; ++j) s += static_cast<double>(g.cholesky.at(i, j)) * e[j];
      out.at(r, i) = static_cast<float>(s);
    }
  }
  return out;
}

Tensor sample_code(const CodeGaussian& g, SeededRng& rng) {
  auto s = sample_codes(g, 1, rng);
  return s.reshaped(Shape{s.size()});
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw CorruptionError("code dump is truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_code_dump(const std::filesystem::path& path, const Tensor& codes) {
  if (codes.rank() != 2) throw ContractError("code dump needs a [n x d] matrix");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  put_u32(out, static_cast<std::uint32_t>(codes.cols()));
  put_u32(out, static_cast<std::uint32_t>(codes.rows()));
  for (float v : codes.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_code_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const auto d = get_u32(in);
  const auto n = get_u32(in);
  if (d == 0 || n == 0) throw FormatError("code dump " + path.string() + " declares an empty matrix");
  Tensor codes(Shape{n, d});
  for (auto& v : codes.data()) {
    const auto bits = get_u32(in);
    std::memcpy(&v, &bits, 4);
  }
  return codes;
}

}  // namespace arae::latent
