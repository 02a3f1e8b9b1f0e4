#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arae/autodiff.hpp"
#include "arae/rng.hpp"

namespace arae::nn {

enum class Mode { Train, Eval };

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

/// Uniform(lo, hi) fill.
template <typename T>
void init_uniform(Parameter<T>& p, double lo, double hi, SeededRng& rng);

/// y = x W^T + b. Weights Glorot-uniform, bias zero.
template <typename T>
struct Affine {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Parameter<T> weight;  // [out x in]
  Parameter<T> bias;    // [out]

  Affine() = default;
  Affine(const std::string& name, std::size_t in, std::size_t out);

  void init(SeededRng& rng);
  Var<T> forward(Tape<T>& tape, Var<T> x) const;
  void collect(ParamList<T>& out) { out.push_back(&weight), out.push_back(&bias); }
};

template <typename T>
struct Embedding {
  Parameter<T> table;  // [vocab x dim]

  Embedding() = default;
  Embedding(const std::string& name, std::size_t vocab, std::size_t dim);

  std::size_t vocab() const { return table.value.rows(); }
  std::size_t dim() const { return table.value.cols(); }
  void init(SeededRng& rng) { init_uniform(table, -0.08, 0.08, rng); }
  Var<T> forward(Tape<T>& tape, std::span<const std::int32_t> ids) const;
  void collect(ParamList<T>& out) { out.push_back(&table); }
};

/// Single-layer LSTM cell. Gate blocks in the fused weight matrices are stacked
/// in the order input, forget, cell candidate, output:
///
///   [i f g o] = x W_x^T + h W_h^T + b
///   c' = sigmoid(f) * c + sigmoid(i) * tanh(g)
///   h' = sigmoid(o) * tanh(c')
///
/// Weights start uniform in [-0.08, 0.08]; the forget-gate bias starts at 1.
template <typename T>
struct LstmCell {
  struct State {
    Var<T> h;
    Var<T> c;
  };

  std::size_t in_dim = 0;
  std::size_t hidden = 0;
  Parameter<T> w_x;   // [4h x in]
  Parameter<T> w_h;   // [4h x h]
  Parameter<T> bias;  // [4h]

  LstmCell() = default;
  LstmCell(const std::string& name, std::size_t in, std::size_t hidden);

  void init(SeededRng& rng);
  State zero_state(Tape<T>& tape, std::size_t batch) const;
  State step(Tape<T>& tape, Var<T> x, const State& prev) const;
  void collect(ParamList<T>& out) { out.push_back(&w_x), out.push_back(&w_h), out.push_back(&bias); }
};

/// Batch normalisation with running statistics (momentum-weighted, unbiased
/// batch variance). Running statistics are buffers, not parameters.
template <typename T>
struct BatchNorm {
  Parameter<T> gamma;
  Parameter<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t dim);

  /// Train mode normalises by batch statistics (reported through the optional
  /// outputs); eval mode uses the running estimates.
  Var<T> forward(Tape<T>& tape, Var<T> x, Mode mode, BasicTensor<T>* batch_mean = nullptr,
                 BasicTensor<T>* batch_var = nullptr) const;
  /// Folds batch statistics into the running estimates.
  void absorb(const BasicTensor<T>& batch_mean, const BasicTensor<T>& batch_var);
  void collect(ParamList<T>& out) { out.push_back(&gamma), out.push_back(&beta); }
};

enum class Activation { None, Relu, Tanh };

/// Stack of affine layers; hidden layers optionally batch-normalised, ReLU
/// between layers, configurable output activation.
template <typename T>
struct Mlp {
  std::vector<Affine<T>> layers;
  std::vector<BatchNorm<T>> norms;  // empty, or one per hidden layer
  Activation output = Activation::None;

  Mlp() = default;
  /// dims = {in, h1, ..., out}
  Mlp(const std::string& name, const std::vector<std::size_t>& dims, bool batch_norm, Activation output);

  std::size_t in_dim() const { return layers.front().in_dim; }
  std::size_t out_dim() const { return layers.back().out_dim; }
  void init(SeededRng& rng);
  Var<T> forward(Tape<T>& tape, Var<T> x, Mode mode = Mode::Eval, bool update_stats = true);
  /// Forward pass that never touches running statistics.
  Var<T> forward_frozen(Tape<T>& tape, Var<T> x, Mode mode = Mode::Eval) const;
  void collect(ParamList<T>& out);
};

}  // namespace arae::nn
