#include "arae/nn.hpp"

#include <cmath>

namespace arae::nn {

template <typename T>
void init_uniform(Parameter<T>& p, double lo, double hi, SeededRng& rng) {
  for (auto& v : p.value.data()) v = static_cast<T>(rng.uniform(lo, hi));
}

// --- Affine -----------------------------------------------------------------

template <typename T>
Affine<T>::Affine(const std::string& name, std::size_t in, std::size_t out)
    : in_dim(in),
      out_dim(out),
      weight(name + ".weight", BasicTensor<T>(Shape{out, in})),
      bias(name + ".bias", BasicTensor<T>(Shape{out})) {}

template <typename T>
void Affine<T>::init(SeededRng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  init_uniform(weight, -bound, bound, rng);
  bias.value.fill(T(0));
}

template <typename T>
Var<T> Affine<T>::forward(Tape<T>& tape, Var<T> x) const {
  if (x.value().rank() > 2 || x.value().cols() != in_dim) {
    throw DimensionError("affine " + weight.name + " expects input width " + std::to_string(in_dim) +
                         ", got " + shape_str(x.shape()));
  }
  return add(matmul_bt(x, tape.param(weight)), tape.param(bias));
}

// --- Embedding --------------------------------------------------------------

template <typename T>
Embedding<T>::Embedding(const std::string& name, std::size_t vocab, std::size_t dim)
    : table(name + ".table", BasicTensor<T>(Shape{vocab, dim})) {}

template <typename T>
Var<T> Embedding<T>::forward(Tape<T>& tape, std::span<const std::int32_t> ids) const {
  return gather_rows(tape.param(table), ids);
}

// --- LSTM -------------------------------------------------------------------

template <typename T>
LstmCell<T>::LstmCell(const std::string& name, std::size_t in, std::size_t h)
    : in_dim(in),
      hidden(h),
      w_x(name + ".w_x", BasicTensor<T>(Shape{4 * h, in})),
      w_h(name + ".w_h", BasicTensor<T>(Shape{4 * h, h})),
      bias(name + ".bias", BasicTensor<T>(Shape{4 * h})) {}

template <typename T>
void LstmCell<T>::init(SeededRng& rng) {
  init_uniform(w_x, -0.08, 0.08, rng);
  init_uniform(w_h, -0.08, 0.08, rng);
  bias.value.fill(T(0));
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias.value[j] = T(1);
}

template <typename T>
typename LstmCell<T>::State LstmCell<T>::zero_state(Tape<T>& tape, std::size_t batch) const {
  return {tape.constant(BasicTensor<T>(Shape{batch, hidden})),
          tape.constant(BasicTensor<T>(Shape{batch, hidden}))};
}

template <typename T>
typename LstmCell<T>::State LstmCell<T>::step(Tape<T>& tape, Var<T> x, const State& prev) const {
  if (x.value().cols() != in_dim || prev.h.value().cols() != hidden ||
      prev.c.value().shape() != prev.h.value().shape() || x.value().rows() != prev.h.value().rows()) {
    throw DimensionError("lstm step: input " + shape_str(x.shape()) + ", h " + shape_str(prev.h.shape()) +
                         ", c " + shape_str(prev.c.shape()) + " for cell " + std::to_string(in_dim) +
                         "->" + std::to_string(hidden));
  }
  auto gates = add(add(matmul_bt(x, tape.param(w_x)), matmul_bt(prev.h, tape.param(w_h))), tape.param(bias));
  auto i = sigmoid(slice_cols(gates, 0, hidden));
  auto f = sigmoid(slice_cols(gates, hidden, hidden));
  auto g = tanh(slice_cols(gates, 2 * hidden, hidden));
  auto o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
  auto c = add(mul(f, prev.c), mul(i, g));
  auto h = mul(o, tanh(c));
  return {h, c};
}

// --- BatchNorm --------------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(const std::string& name, std::size_t dim)
    : gamma(name + ".gamma", BasicTensor<T>::ones(Shape{dim})),
      beta(name + ".beta", BasicTensor<T>::zeros(Shape{dim})),
      running_mean(BasicTensor<T>::zeros(Shape{dim})),
      running_var(BasicTensor<T>::ones(Shape{dim})) {}

template <typename T>
Var<T> BatchNorm<T>::forward(Tape<T>& tape, Var<T> x, Mode mode, BasicTensor<T>* batch_mean,
                             BasicTensor<T>* batch_var) const {
  if (mode == Mode::Train) {
    return batch_norm(x, tape.param(gamma), tape.param(beta), eps, batch_mean, batch_var);
  }
  const auto& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (d != gamma.value.size()) {
    throw DimensionError("batchnorm expects width " + std::to_string(gamma.value.size()) + ", got " +
                         shape_str(xv.shape()));
  }
  std::vector<T> inv(d);
  for (std::size_t c = 0; c < d; ++c) inv[c] = T(1) / std::sqrt(running_var[c] + eps);
  BasicTensor<T> xhat(xv.shape());
  BasicTensor<T> out(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (xv[r * d + c] - running_mean[c]) * inv[c];
      out[r * d + c] = gamma.value[c] * xhat[r * d + c] + beta.value[c];
    }
  }
  auto g = tape.param(gamma);
  auto b = tape.param(beta);
  const auto ix = x.id(), ig = g.id(), ib = b.id();
  return tape.record(std::move(out), {x, g, b},
                     [ix, ig, ib, xhat = std::move(xhat), inv = std::move(inv), n, d](Tape<T>& t, std::size_t self) {
                       const auto& gr = t.grad(self);
                       const auto& gv = t.value(ig);
                       for (std::size_t r = 0; r < n; ++r) {
                         for (std::size_t c = 0; c < d; ++c) {
                           const T v = gr[r * d + c];
                           if (t.requires_grad(ix)) t.grad_mut(ix)[r * d + c] += v * gv[c] * inv[c];
                           if (t.requires_grad(ig)) t.grad_mut(ig)[c] += v * xhat[r * d + c];
                           if (t.requires_grad(ib)) t.grad_mut(ib)[c] += v;
                         }
                       }
                     });
}

template <typename T>
void BatchNorm<T>::absorb(const BasicTensor<T>& batch_mean, const BasicTensor<T>& batch_var) {
  for (std::size_t c = 0; c < running_mean.size(); ++c) {
    running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * batch_mean[c];
    running_var[c] = (T(1) - momentum) * running_var[c] + momentum * batch_var[c];
  }
}

// --- Mlp --------------------------------------------------------------------

template <typename T>
Mlp<T>::Mlp(const std::string& name, const std::vector<std::size_t>& dims, bool batch_norm, Activation out)
    : output(out) {
  if (dims.size() < 2) throw ConfigError("MLP " + name + " needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i + 1] == 0) throw ConfigError("MLP " + name + " has a zero width");
    layers.emplace_back(name + ".l" + std::to_string(i), dims[i], dims[i + 1]);
    if (batch_norm && i + 2 < dims.size()) norms.emplace_back(name + ".bn" + std::to_string(i), dims[i + 1]);
  }
}

template <typename T>
void Mlp<T>::init(SeededRng& rng) {
  for (auto& l : layers) l.init(rng);
}

template <typename T>
Var<T> Mlp<T>::forward(Tape<T>& tape, Var<T> x, Mode mode, bool update_stats) {
  auto h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(tape, h);
    if (i + 1 == layers.size()) break;
    if (!norms.empty()) {
      BasicTensor<T> m, v;
      h = norms[i].forward(tape, h, mode, &m, &v);
      if (mode == Mode::Train && update_stats) norms[i].absorb(m, v);
    }
    h = relu(h);
  }
  if (output == Activation::Tanh) h = tanh(h);
  if (output == Activation::Relu) h = relu(h);
  return h;
}

template <typename T>
Var<T> Mlp<T>::forward_frozen(Tape<T>& tape, Var<T> x, Mode mode) const {
  auto h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(tape, h);
    if (i + 1 == layers.size()) break;
    if (!norms.empty()) h = norms[i].forward(tape, h, mode);
    h = relu(h);
  }
  if (output == Activation::Tanh) h = tanh(h);
  if (output == Activation::Relu) h = relu(h);
  return h;
}

template <typename T>
void Mlp<T>::collect(ParamList<T>& out) {
  for (auto& l : layers) l.collect(out);
  for (auto& n : norms) n.collect(out);
}

#define ARAE_INSTANTIATE_NN(T)                                                 \
  template void init_uniform<T>(Parameter<T>&, double, double, SeededRng&);    \
  template struct Affine<T>;                                                   \
  template struct Embedding<T>;                                                \
  template struct LstmCell<T>;                                                 \
  template struct BatchNorm<T>;                                                \
  template struct Mlp<T>;

ARAE_INSTANTIATE_NN(float)
ARAE_INSTANTIATE_NN(double)

}  // namespace arae::nn
