#include "arae/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace arae {

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::variable(BasicTensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.kind = Kind::Variable;
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::constant(BasicTensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.kind = Kind::Constant;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::param(const Parameter<T>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>(this, it->second);
  Node n;
  n.value = p.value;
  n.kind = Kind::Param;
  n.param = &p;
  n.requires_grad = true;
  auto v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

template <typename T>
Var<T> Tape<T>::record(BasicTensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn fn) {
  return record(std::move(value), std::span<const Var<T>>(parents.begin(), parents.size()),
                std::move(fn));
}

template <typename T>
Var<T> Tape<T>::record(BasicTensor<T> value, std::span<const Var<T>> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.kind = Kind::Op;
  for (const auto& p : parents) {
    if (&p.tape() != this) throw ContractError("operands live on different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

template <typename T>
const BasicTensor<T>& Tape<T>::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = BasicTensor<T>::zeros(n.value.shape());
  return n.grad;
}

template <typename T>
BasicTensor<T>& Tape<T>::grad_mut(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = BasicTensor<T>::zeros(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> root) {
  if (&root.tape() != this) throw ContractError("backward root lives on another tape");
  if (nodes_[root.id()].value.size() != 1) {
    throw ContractError("backward needs a scalar root, got " +
                        shape_str(nodes_[root.id()].value.shape()));
  }
  // Intermediate and parameter slots are per-pass; variable leaves accumulate.
  for (auto& n : nodes_) {
    if (n.kind == Kind::Op || n.kind == Kind::Param) n.grad = BasicTensor<T>();
  }
  if (!nodes_[root.id()].requires_grad) return;
  grad_mut(root.id())[0] += T(1);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (n.kind != Kind::Param || n.grad.empty()) continue;
    auto& pg = n.param->ensure_grad();
    for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
  }
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

template <typename T>
Tape<T>& tape_of(Var<T> a, Var<T> b) {
  if (!a.valid() || !b.valid()) throw ContractError("operation on an unbound Var");
  if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
  return a.tape();
}

template <typename T>
void require_2d(const BasicTensor<T>& t, const char* what) {
  if (t.rank() > 2) throw DimensionError(std::string(what) + " needs rank <= 2, got " + shape_str(t.shape()));
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
void axpy(BasicTensor<T>& dst, const BasicTensor<T>& src, T alpha = T(1)) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

enum class Broadcast { Same, Scalar, Row };

template <typename T>
Broadcast classify(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b, bool allow_row) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.size() == 1) return Broadcast::Scalar;
  if (allow_row && a.rank() == 2 && b.rows() == 1 && b.rank() <= 2 && b.cols() == a.cols()) {
    return Broadcast::Row;
  }
  mismatch(op, a.shape(), b.shape());
}

template <typename T, typename F, typename D>
Var<T> unary(Var<T> a, F f, D dfdx_from_y) {
  auto& tape = a.tape();
  const auto& x = a.value();
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const auto ia = a.id();
  return tape.record(std::move(y), {a}, [ia, dfdx_from_y](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& yv = t.value(self);
    const auto& xv = t.value(ia);
    auto& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx_from_y(xv[i], yv[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& tape = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_2d(av, "matmul");
  require_2d(bv, "matmul");
  if (av.cols() != bv.rows()) mismatch("matmul", av.shape(), bv.shape());
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  BasicTensor<T> out(Shape{m, n});
  gemm<T>(false, false, m, n, k, T(1), av.raw(), bv.raw(), T(0), out.raw());
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, m, n, k](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      gemm<T>(false, true, m, k, n, T(1), g.raw(), t.value(ib).raw(), T(1), t.grad_mut(ia).raw());
    }
    if (t.requires_grad(ib)) {
      gemm<T>(true, false, k, n, m, T(1), t.value(ia).raw(), g.raw(), T(1), t.grad_mut(ib).raw());
    }
  });
}

template <typename T>
Var<T> matmul_bt(Var<T> a, Var<T> b) {
  auto& tape = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_2d(av, "matmul_bt");
  require_2d(bv, "matmul_bt");
  if (av.cols() != bv.cols()) mismatch("matmul_bt", av.shape(), bv.shape());
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  BasicTensor<T> out(Shape{m, n});
  gemm<T>(false, true, m, n, k, T(1), av.raw(), bv.raw(), T(0), out.raw());
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, m, n, k](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) {
      // dA = G * B
      gemm<T>(false, false, m, k, n, T(1), g.raw(), t.value(ib).raw(), T(1), t.grad_mut(ia).raw());
    }
    if (t.requires_grad(ib)) {
      // dB = G^T * A
      gemm<T>(true, false, n, k, m, T(1), g.raw(), t.value(ia).raw(), T(1), t.grad_mut(ib).raw());
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& tape = tape_of(a, b);
  if (a.value().size() == 1 && b.value().size() > 1) std::swap(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const Broadcast mode = classify("add", av, bv, true);
  BasicTensor<T> out = av;
  const std::size_t cols = mode == Broadcast::Row ? av.cols() : 1;
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (mode) {
      case Broadcast::Same: out[i] += bv[i]; break;
      case Broadcast::Scalar: out[i] += bv[0]; break;
      case Broadcast::Row: out[i] += bv[i % cols]; break;
    }
  }
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, mode, cols](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) axpy(t.grad_mut(ia), g);
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_mut(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (mode) {
          case Broadcast::Same: gb[i] += g[i]; break;
          case Broadcast::Scalar: gb[0] += g[i]; break;
          case Broadcast::Row: gb[i % cols] += g[i]; break;
        }
      }
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  auto& tape = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const Broadcast mode = classify("sub", av, bv, false);
  BasicTensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= mode == Broadcast::Same ? bv[i] : bv[0];
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, mode](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) axpy(t.grad_mut(ia), g);
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_mut(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[mode == Broadcast::Same ? i : 0] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  auto& tape = tape_of(a, b);
  if (a.value().size() == 1 && b.value().size() > 1) std::swap(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const Broadcast mode = classify("mul", av, bv, false);
  BasicTensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mode == Broadcast::Same ? bv[i] : bv[0];
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, mode](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(ia);
    const auto& y = t.value(ib);
    const bool same = mode == Broadcast::Same;
    if (t.requires_grad(ia)) {
      auto& ga = t.grad_mut(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[same ? i : 0];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_mut(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[same ? i : 0] += g[i] * x[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  return unary<T>(
      a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
  return unary<T>(
      a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> scale_grad(Var<T> a, T s) {
  auto& tape = a.tape();
  const auto ia = a.id();
  return tape.record(a.value(), {a}, [ia, s](Tape<T>& t, std::size_t self) {
    axpy(t.grad_mut(ia), t.grad(self), s);
  });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return unary<T>(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary<T>(
      a,
      [](T x) {
        if (x >= 0) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary<T>(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum(Var<T> a) {
  auto& tape = a.tape();
  T s = 0;
  for (T v : a.value().data()) s += v;
  const auto ia = a.id();
  return tape.record(BasicTensor<T>::scalar(s), {a}, [ia](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    auto& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

// ---------------------------------------------------------------------------
// Structural

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_cols needs at least one operand");
  auto& tape = parts[0].tape();
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_2d(p.value(), "concat_cols");
    if (p.value().rows() != rows) mismatch("concat_cols", parts[0].shape(), p.shape());
    widths.push_back(p.value().cols());
    ids.push_back(p.id());
    total += p.value().cols();
  }
  BasicTensor<T> out(Shape{rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.raw() + r * widths[k], widths[k], out.raw() + r * total + off);
    }
    off += widths[k];
  }
  return tape.record(std::move(out), parts, [ids, widths, rows, total](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    std::size_t o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        auto& gk = t.grad_mut(ids[k]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += g[r * total + o + c];
        }
      }
      o += widths[k];
    }
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t start, std::size_t len) {
  auto& tape = a.tape();
  const auto& av = a.value();
  require_2d(av, "slice_cols");
  const std::size_t rows = av.rows(), cols = av.cols();
  if (len == 0 || start + len > cols) {
    throw DimensionError("slice_cols [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of " + shape_str(av.shape()));
  }
  BasicTensor<T> out(Shape{rows, len});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(av.raw() + r * cols + start, len, out.raw() + r * len);
  const auto ia = a.id();
  return tape.record(std::move(out), {a}, [ia, rows, cols, start, len](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad_mut(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < len; ++c) ga[r * cols + start + c] += g[r * len + c];
    }
  });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> ids) {
  auto& tape = table.tape();
  const auto& tv = table.value();
  require_2d(tv, "gather_rows");
  const std::size_t n = tv.rows(), d = tv.cols();
  if (ids.empty()) throw ContractError("gather_rows needs at least one index");
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      throw IndexError("row index " + std::to_string(id) + " out of range for " + shape_str(tv.shape()));
    }
  }
  BasicTensor<T> out(Shape{ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::copy_n(tv.raw() + static_cast<std::size_t>(ids[r]) * d, d, out.raw() + r * d);
  }
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  const auto it = table.id();
  return tape.record(std::move(out), {table}, [it, idx = std::move(idx), d](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gt = t.grad_mut(it);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      T* dst = gt.raw() + static_cast<std::size_t>(idx[r]) * d;
      const T* src = g.raw() + r * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
Var<T> where_rows(std::span<const std::uint8_t> mask, Var<T> a, Var<T> b) {
  auto& tape = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) mismatch("where_rows", av.shape(), bv.shape());
  if (mask.size() != av.rows()) {
    throw DimensionError("where_rows mask length " + std::to_string(mask.size()) + " vs " +
                         shape_str(av.shape()));
  }
  const std::size_t d = av.cols();
  BasicTensor<T> out = bv;
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (mask[r]) std::copy_n(av.raw() + r * d, d, out.raw() + r * d);
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  const auto ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, m = std::move(m), d](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t r = 0; r < m.size(); ++r) {
      const auto target = m[r] ? ia : ib;
      if (!t.requires_grad(target)) continue;
      auto& gt = t.grad_mut(target);
      for (std::size_t c = 0; c < d; ++c) gt[r * d + c] += g[r * d + c];
    }
  });
}

template <typename T>
Var<T> l2_normalize_rows(Var<T> a) {
  auto& tape = a.tape();
  const auto& av = a.value();
  require_2d(av, "l2_normalize_rows");
  const std::size_t rows = av.rows(), d = av.cols();
  BasicTensor<T> out(av.shape());
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t c = 0; c < d; ++c) s += av[r * d + c] * av[r * d + c];
    const T nrm = std::sqrt(s);
    if (!std::isfinite(nrm)) throw NumericError("non-finite code");
    if (!(nrm > T(0))) throw ContractError("zero-norm code");
    norms[r] = nrm;
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = av[r * d + c] / nrm;
  }
  const auto ia = a.id();
  return tape.record(std::move(out), {a}, [ia, norms = std::move(norms), d](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& ga = t.grad_mut(ia);
    for (std::size_t r = 0; r < norms.size(); ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += y[r * d + c] * g[r * d + c];
      for (std::size_t c = 0; c < d; ++c) {
        ga[r * d + c] += (g[r * d + c] - y[r * d + c] * dot) / norms[r];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Losses

namespace {

template <typename T>
void check_targets(const BasicTensor<T>& logits, std::span<const std::int32_t> targets) {
  if (logits.rank() > 2) throw DimensionError("logits need rank <= 2, got " + shape_str(logits.shape()));
  if (targets.size() != logits.rows()) {
    throw DimensionError("got " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  for (auto y : targets) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw IndexError("target " + std::to_string(y) + " out of range for " +
                       std::to_string(logits.cols()) + " classes");
    }
  }
}

// Writes row-wise softmax into probs and returns per-row -log p[target].
template <typename T>
std::vector<T> softmax_nll_rows(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                                BasicTensor<T>& probs) {
  const std::size_t rows = logits.rows(), v = logits.cols();
  probs = BasicTensor<T>(Shape{rows, v});
  std::vector<T> nll(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.raw() + r * v;
    T* p = probs.raw() + r * v;
    const T mx = *std::max_element(z, z + v);
    T s = 0;
    for (std::size_t c = 0; c < v; ++c) {
      p[c] = std::exp(z[c] - mx);
      s += p[c];
    }
    for (std::size_t c = 0; c < v; ++c) p[c] /= s;
    nll[r] = -(z[targets[r]] - mx - std::log(s));
  }
  return nll;
}

}  // namespace

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const std::int32_t> targets, BasicTensor<T>* probs_out) {
  const std::size_t rows = logits.value().rows();
  std::vector<T> w(rows, T(1) / static_cast<T>(rows));
  check_targets(logits.value(), targets);
  if (probs_out) {
    BasicTensor<T> probs;
    softmax_nll_rows(logits.value(), targets, probs);
    *probs_out = std::move(probs);
  }
  return weighted_softmax_nll<T>(logits, targets, std::span<const T>(w));
}

template <typename T>
Var<T> weighted_softmax_nll(Var<T> logits, std::span<const std::int32_t> targets, std::span<const T> weights) {
  auto& tape = logits.tape();
  const auto& lv = logits.value();
  check_targets(lv, targets);
  if (weights.size() != targets.size()) throw DimensionError("weights/targets length mismatch");
  BasicTensor<T> probs;
  const auto nll = softmax_nll_rows(lv, targets, probs);
  T loss = 0;
  for (std::size_t r = 0; r < nll.size(); ++r) {
    if (weights[r] != T(0)) loss += weights[r] * nll[r];
  }
  std::vector<std::int32_t> y(targets.begin(), targets.end());
  std::vector<T> w(weights.begin(), weights.end());
  const auto il = logits.id();
  return tape.record(BasicTensor<T>::scalar(loss), {logits},
                     [il, probs = std::move(probs), y = std::move(y), w = std::move(w)](Tape<T>& t, std::size_t self) {
                       const T g = t.grad(self)[0];
                       auto& gl = t.grad_mut(il);
                       const std::size_t v = probs.cols();
                       for (std::size_t r = 0; r < y.size(); ++r) {
                         if (w[r] == T(0)) continue;
                         const T s = g * w[r];
                         for (std::size_t c = 0; c < v; ++c) gl[r * v + c] += s * probs[r * v + c];
                         gl[r * v + static_cast<std::size_t>(y[r])] -= s;
                       }
                     });
}

template <typename T>
Var<T> sigmoid_bce(Var<T> logits, const BasicTensor<T>& targets) {
  auto& tape = logits.tape();
  const auto& h = logits.value();
  if (h.shape() != targets.shape()) mismatch("sigmoid_bce", h.shape(), targets.shape());
  const T rows = static_cast<T>(h.rows());
  T loss = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const T x = h[i];
    loss += std::max(x, T(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= rows;
  const auto il = logits.id();
  return tape.record(BasicTensor<T>::scalar(loss), {logits}, [il, targets, rows](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0] / rows;
    const auto& hv = t.value(il);
    auto& gl = t.grad_mut(il);
    for (std::size_t i = 0; i < hv.size(); ++i) {
      const T x = hv[i];
      const T s = x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
      gl[i] += g * (s - targets[i]);
    }
  });
}

template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps, BasicTensor<T>* batch_mean,
                  BasicTensor<T>* batch_var) {
  auto& tape = tape_of(x, gamma);
  const auto& xv = x.value();
  require_2d(xv, "batch_norm");
  const std::size_t n = xv.rows(), d = xv.cols();
  if (n < 2) throw ContractError("batch_norm in train mode needs batch >= 2");
  if (gamma.value().size() != d || beta.value().size() != d) {
    mismatch("batch_norm", xv.shape(), gamma.shape());
  }
  std::vector<T> mu(d, 0), var(d, 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) mu[c] += xv[r * d + c];
  }
  for (auto& m : mu) m /= static_cast<T>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const T e = xv[r * d + c] - mu[c];
      var[c] += e * e;
    }
  }
  if (batch_mean) *batch_mean = BasicTensor<T>(Shape{d}, mu);
  if (batch_var) {
    std::vector<T> unbiased(d);
    for (std::size_t c = 0; c < d; ++c) unbiased[c] = var[c] / static_cast<T>(n - 1);
    *batch_var = BasicTensor<T>(Shape{d}, std::move(unbiased));
  }
  std::vector<T> inv_std(d);
  for (std::size_t c = 0; c < d; ++c) inv_std[c] = T(1) / std::sqrt(var[c] / static_cast<T>(n) + eps);
  BasicTensor<T> xhat(xv.shape());
  BasicTensor<T> out(xv.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const T xh = (xv[r * d + c] - mu[c]) * inv_std[c];
      xhat[r * d + c] = xh;
      out[r * d + c] = gv[c] * xh + bv[c];
    }
  }
  const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
  return tape.record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std), n, d](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        std::vector<T> sum_g(d, 0), sum_gx(d, 0);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < d; ++c) {
            sum_g[c] += g[r * d + c];
            sum_gx[c] += g[r * d + c] * xhat[r * d + c];
          }
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_mut(ib);
          for (std::size_t c = 0; c < d; ++c) gb[c] += sum_g[c];
        }
        if (t.requires_grad(ig)) {
          auto& gg = t.grad_mut(ig);
          for (std::size_t c = 0; c < d; ++c) gg[c] += sum_gx[c];
        }
        if (t.requires_grad(ix)) {
          const auto& gamma_v = t.value(ig);
          auto& gx = t.grad_mut(ix);
          const T nn = static_cast<T>(n);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
              gx[r * d + c] += gamma_v[c] * inv_std[c] / nn *
                               (nn * g[r * d + c] - sum_g[c] - xhat[r * d + c] * sum_gx[c]);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& logits) {
  const std::size_t rows = logits.rows(), v = logits.cols();
  BasicTensor<T> p(Shape{rows, v});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.raw() + r * v;
    const T mx = *std::max_element(z, z + v);
    T s = 0;
    for (std::size_t c = 0; c < v; ++c) {
      p[r * v + c] = std::exp(z[c] - mx);
      s += p[r * v + c];
    }
    for (std::size_t c = 0; c < v; ++c) p[r * v + c] /= s;
  }
  return p;
}

#define ARAE_INSTANTIATE_AD(T)                                                                         \
  template class Tape<T>;                                                                              \
  template Var<T> matmul(Var<T>, Var<T>);                                                              \
  template Var<T> matmul_bt(Var<T>, Var<T>);                                                           \
  template Var<T> add(Var<T>, Var<T>);                                                                 \
  template Var<T> sub(Var<T>, Var<T>);                                                                 \
  template Var<T> mul(Var<T>, Var<T>);                                                                 \
  template Var<T> scale(Var<T>, T);                                                                    \
  template Var<T> add_scalar(Var<T>, T);                                                               \
  template Var<T> scale_grad(Var<T>, T);                                                               \
  template Var<T> tanh(Var<T>);                                                                        \
  template Var<T> sigmoid(Var<T>);                                                                     \
  template Var<T> relu(Var<T>);                                                                        \
  template Var<T> sum(Var<T>);                                                                         \
  template Var<T> mean(Var<T>);                                                                        \
  template Var<T> concat_cols(std::span<const Var<T>>);                                                \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                                        \
  template Var<T> gather_rows(Var<T>, std::span<const std::int32_t>);                                  \
  template Var<T> where_rows(std::span<const std::uint8_t>, Var<T>, Var<T>);                           \
  template Var<T> l2_normalize_rows(Var<T>);                                                           \
  template Var<T> softmax_cross_entropy(Var<T>, std::span<const std::int32_t>, BasicTensor<T>*);       \
  template Var<T> weighted_softmax_nll(Var<T>, std::span<const std::int32_t>, std::span<const T>);     \
  template Var<T> sigmoid_bce(Var<T>, const BasicTensor<T>&);                                          \
  template Var<T> batch_norm(Var<T>, Var<T>, Var<T>, T, BasicTensor<T>*, BasicTensor<T>*);             \
  template BasicTensor<T> softmax_rows(const BasicTensor<T>&);

ARAE_INSTANTIATE_AD(float)
ARAE_INSTANTIATE_AD(double)

}  // namespace arae
