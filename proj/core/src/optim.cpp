#include "arae/optim.hpp"

#include <algorithm>
#include <cmath>

namespace arae::nn {

template <typename T>
double grad_norm(const ParamList<T>& params) {
  double s = 0.0;
  for (auto* p : params) {
    for (T g : p->ensure_grad().data()) s += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(s);
}

template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm) {
    const T factor = static_cast<T>(max_norm / (norm + 1e-12));
    for (auto* p : params) {
      for (auto& g : p->grad.data()) g *= factor;
    }
  }
  return norm;
}

template <typename T>
void clamp_values(const ParamList<T>& params, T eps) {
  for (auto* p : params) {
    for (auto& v : p->value.data()) v = std::clamp(v, -eps, eps);
  }
}

template <typename T>
void Sgd<T>::step() {
  const T lr = static_cast<T>(lr_);
  for (auto* p : params_) {
    const auto& g = p->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) p->value[i] -= lr * g[i];
  }
}

template <typename T>
Adam<T>::Adam(ParamList<T> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto* p = params_[k];
    const auto& g = p->ensure_grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p->value[i] = static_cast<T>(p->value[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

#define ARAE_INSTANTIATE_OPTIM(T)                                  \
  template double grad_norm<T>(const ParamList<T>&);               \
  template double clip_grad_norm<T>(const ParamList<T>&, double);  \
  template void clamp_values<T>(const ParamList<T>&, T);           \
  template class Sgd<T>;                                           \
  template class Adam<T>;

ARAE_INSTANTIATE_OPTIM(float)
ARAE_INSTANTIATE_OPTIM(double)

}  // namespace arae::nn
