#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "arae/tensor.hpp"

namespace arae {

/// A named trainable tensor. `grad` accumulates across backward passes until
/// `zero_grad` is called; it is scratch state and therefore mutable, so that
/// forward passes can run over const models.
template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  mutable BasicTensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<T> v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() const { grad = BasicTensor<T>::zeros(value.shape()); }
  /// Gradient, allocating zeros if nothing has been accumulated yet.
  BasicTensor<T>& ensure_grad() const {
    if (grad.shape() != value.shape()) grad = BasicTensor<T>::zeros(value.shape());
    return grad;
  }
};

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
template <typename T>
class Var {
 public:
  Var() = default;

  const BasicTensor<T>& value() const;
  const BasicTensor<T>& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape. A tape is rebuilt for every training step
/// and must not be shared between threads.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf. Its gradient accumulates across backward calls.
  Var<T> variable(BasicTensor<T> value);
  /// Non-differentiable leaf.
  Var<T> constant(BasicTensor<T> value);
  /// Leaf bound to a parameter; backward adds into `p.grad`. Repeated calls
  /// with the same parameter return the same node.
  Var<T> param(const Parameter<T>& p);
  /// Copy of `v` with no path back to its inputs.
  Var<T> detach(Var<T> v) { return constant(v.value()); }

  /// Appends an op node. The node requires grad iff any parent does.
  Var<T> record(BasicTensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn fn);
  Var<T> record(BasicTensor<T> value, std::span<const Var<T>> parents, BackwardFn fn);

  /// Reverse-topological accumulation from a one-element root.
  void backward(Var<T> root);

  const BasicTensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  const BasicTensor<T>& grad(std::size_t id) const;
  /// Gradient slot for accumulation; allocated as zeros on first use.
  BasicTensor<T>& grad_mut(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  enum class Kind : std::uint8_t { Variable, Constant, Param, Op };
  struct Node {
    BasicTensor<T> value;
    mutable BasicTensor<T> grad;
    BackwardFn backward;
    const Parameter<T>* param = nullptr;
    Kind kind = Kind::Op;
    bool requires_grad = false;
  };

  Var<T> push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
const BasicTensor<T>& Var<T>::grad() const {
  return tape_->grad(id_);
}

// ---------------------------------------------------------------------------
// Differentiable operations. All operands must live on the same tape.

/// [m x k] * [k x n]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// a * b^T with a [m x k], b [n x k]; the affine-layer product x W^T.
template <typename T>
Var<T> matmul_bt(Var<T> a, Var<T> b);

/// Same-shape addition, or b broadcast as a scalar or as a row vector over the
/// rows of a (bias add). No other broadcasting is accepted.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
/// Same-shape subtraction or scalar b.
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
/// Same-shape product or scalar b.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T s);
template <typename T>
Var<T> add_scalar(Var<T> a, T s);
/// Identity in the forward pass; multiplies the incoming gradient by s.
template <typename T>
Var<T> scale_grad(Var<T> a, T s);

template <typename T>
Var<T> tanh(Var<T> a);
template <typename T>
Var<T> sigmoid(Var<T> a);
template <typename T>
Var<T> relu(Var<T> a);

template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> mean(Var<T> a);

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts);
template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  const Var<T> parts[] = {a, b};
  return concat_cols<T>(std::span<const Var<T>>(parts));
}
template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t start, std::size_t len);

/// Rows of `table` selected by `ids` (embedding lookup).
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> ids);

/// Row i of the result is row i of `a` if mask[i] else row i of `b`.
template <typename T>
Var<T> where_rows(std::span<const std::uint8_t> mask, Var<T> a, Var<T> b);

/// Each row scaled to unit L2 norm. A zero row raises ContractError("zero-norm code").
template <typename T>
Var<T> l2_normalize_rows(Var<T> a);

/// Mean over rows of -log softmax(logits)[target]; max-subtracted.
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const std::int32_t> targets,
                             BasicTensor<T>* probs_out = nullptr);
/// Sum over rows of weights[i] * -log softmax(logits_i)[targets[i]]. Rows with
/// zero weight contribute nothing, including to the gradient.
template <typename T>
Var<T> weighted_softmax_nll(Var<T> logits, std::span<const std::int32_t> targets,
                            std::span<const T> weights);

/// Mean over rows of the per-row sum of binary cross-entropies between
/// sigmoid(logits) and 0/1 targets, computed in the stable log1p form.
template <typename T>
Var<T> sigmoid_bce(Var<T> logits, const BasicTensor<T>& targets);

/// Training-mode batch normalisation over rows with a fused backward.
/// Biased batch variance is used for normalisation; the batch mean and the
/// unbiased variance are written to the optional outputs for running stats.
template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps, BasicTensor<T>* batch_mean = nullptr,
                  BasicTensor<T>* batch_var = nullptr);

/// Row-wise softmax of a plain tensor.
template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& logits);

}  // namespace arae
