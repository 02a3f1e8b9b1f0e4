#pragma once

#include <cstddef>
#include <vector>

#include "arae/nn.hpp"

namespace arae::nn {

template <typename T>
void zero_grad(const ParamList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

/// Global L2 norm over all gradients.
template <typename T>
double grad_norm(const ParamList<T>& params);

/// Rescales gradients so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm);

/// Clamps every parameter value into [-eps, eps].
template <typename T>
void clamp_values(const ParamList<T>& params, T eps);

/// Plain SGD: p -= lr * grad.
template <typename T>
class Sgd {
 public:
  Sgd(ParamList<T> params, double lr) : params_(std::move(params)), lr_(lr) {}
  void step();
  double lr() const { return lr_; }
  const ParamList<T>& params() const { return params_; }

 private:
  ParamList<T> params_;
  double lr_;
};

/// Adam with bias correction.
template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();
  double lr() const { return lr_; }
  std::size_t steps() const { return t_; }
  const ParamList<T>& params() const { return params_; }

 private:
  ParamList<T> params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace arae::nn
