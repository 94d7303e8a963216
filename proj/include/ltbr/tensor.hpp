#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ltbr/error.hpp"

namespace ltbr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class Tape;
class GradientMap;

// Dense row-major tensor of doubles. Storage is immutable once constructed and
// shared between copies. A tensor produced while a tape is active carries the
// id of the node that recorded it; tensors made outside a tape are detached
// plain values.
class Tensor {
 public:
  Tensor() : data_(std::make_shared<const std::vector<double>>()) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
    if (data.size() != shape_numel(shape_))
      fail(Err::LengthMismatch, "tensor data has " + std::to_string(data.size()) +
                                    " elements, shape " + shape_str(shape_) + " needs " +
                                    std::to_string(shape_numel(shape_)));
    data_ = std::make_shared<const std::vector<double>>(std::move(data));
  }

  static Tensor zeros(Shape shape) {
    std::vector<double> d(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(d));
  }

  static Tensor full(Shape shape, double value) {
    std::vector<double> d(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(d));
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor row(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }

  std::span<const double> data() const { return {data_->data(), data_->size()}; }
  const double* raw() const { return data_->data(); }

  double at(std::size_t i) const {
    if (i >= size()) fail(Err::DomainError, "flat index out of range");
    return (*data_)[i];
  }

  double at(std::size_t i, std::size_t j) const {
    if (rank() != 2) fail(Err::DomainError, "at(i,j) needs a rank-2 tensor");
    if (i >= shape_[0] || j >= shape_[1]) fail(Err::DomainError, "index out of range");
    return (*data_)[i * shape_[1] + j];
  }

  // Value of a 1-element tensor.
  double item() const {
    if (size() != 1) fail(Err::NotScalar, "item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
  }

  bool all_finite() const {
    for (double v : *data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  int node_id() const { return node_; }
  std::uint64_t node_epoch() const { return epoch_; }

  // Plain-value copy with no tape attachment.
  Tensor detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
  }

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  int node_ = -1;
  std::uint64_t epoch_ = 0;
};

// Gradients produced by one backward pass, keyed by tape node id.
class GradientMap {
 public:
  bool has(const Tensor& t) const {
    return t.node_id() >= 0 && t.node_epoch() == epoch_ &&
           static_cast<std::size_t>(t.node_id()) < grads_.size() &&
           !grads_[t.node_id()].empty();
  }

  // Gradient of the loss with respect to `t`. Zero if no path reached it.
  Tensor grad(const Tensor& t) const {
    if (t.node_id() < 0 || t.node_epoch() != epoch_)
      fail(Err::DetachedTensor, "gradient requested for a tensor not on the mapped tape");
    auto id = static_cast<std::size_t>(t.node_id());
    if (id >= grads_.size() || grads_[id].empty()) return Tensor::zeros(t.shape());
    return Tensor(t.shape(), grads_[id]);
  }

  // Op-author API: zero-initialised accumulation buffer for node `id`.
  std::vector<double>& buffer(int id) {
    auto& b = grads_[static_cast<std::size_t>(id)];
    if (b.empty()) b.assign(numel_[static_cast<std::size_t>(id)], 0.0);
    return b;
  }

 private:
  friend class Tape;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> numel_;
  std::vector<std::vector<double>> grads_;
};

// Records the operations of one training step. Construction makes it the
// active tape for the current thread; destruction detaches it. Backward walks
// the recorded nodes once, in reverse order of creation.
class Tape {
 public:
  using Pull = std::function<void(const std::vector<double>& gout, GradientMap& g)>;

  Tape() {
    if (active_) fail(Err::InvalidArgument, "a tape is already active on this thread");
    epoch_ = ++epoch_counter_;
    active_ = this;
  }

  ~Tape() { active_ = nullptr; }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  std::uint64_t epoch() const { return epoch_; }
  std::size_t node_count() const { return nodes_.size(); }

  bool owns(const Tensor& t) const { return t.node_id() >= 0 && t.node_epoch() == epoch_; }

  // Registers `t` as a differentiable leaf.
  void watch(Tensor& t) {
    if (owns(t)) return;
    t.node_ = record_node(t.size(), "leaf", nullptr);
    t.epoch_ = epoch_;
  }

  // Op-author API: makes `out` a recorded node whose backward rule is `pull`.
  // `pull` receives the output gradient and accumulates into parent buffers.
  void attach(Tensor& out, const char* kind, Pull pull) {
    out.node_ = record_node(out.size(), kind, std::move(pull));
    out.epoch_ = epoch_;
  }

  // Gradient of a 1-element loss with respect to every recorded node.
  GradientMap backward(const Tensor& loss) {
    if (!owns(loss)) fail(Err::DetachedTensor, "backward on a tensor not recorded by this tape");
    if (loss.size() != 1) fail(Err::NotScalar, "backward needs a 1-element loss");
    auto last = static_cast<std::size_t>(loss.node_id());
    GradientMap g;
    g.epoch_ = epoch_;
    g.grads_.resize(last + 1);
    g.numel_.resize(last + 1);
    for (std::size_t i = 0; i <= last; ++i) g.numel_[i] = nodes_[i].numel;
    g.buffer(loss.node_id())[0] = 1.0;
    for (std::size_t i = last + 1; i-- > 0;) {
      if (g.grads_[i].empty() || !nodes_[i].pull) continue;
      nodes_[i].pull(g.grads_[i], g);
    }
    return g;
  }

 private:
  struct Node {
    std::size_t numel;
    const char* kind;
    Pull pull;  // null for leaves
  };

  int record_node(std::size_t numel, const char* kind, Pull pull) {
    nodes_.push_back(Node{numel, kind, std::move(pull)});
    return static_cast<int>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::uint64_t epoch_ = 0;

  inline static thread_local Tape* active_ = nullptr;
  inline static std::atomic<std::uint64_t> epoch_counter_{0};
};

namespace detail {

inline bool tracked(const Tensor& t, const Tape* tp) { return tp && tp->owns(t); }

// C[m x n] += A[m x k] * B[k x n]
inline void mm_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    double* crow = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double a = arow[p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

// C[m x n] += X[m x c] * Y^T with Y stored [n x c]
inline void mm_nt_acc(const double* X, const double* Y, double* C, std::size_t m, std::size_t c,
                      std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* xrow = X + i * c;
    double* crow = C + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* yrow = Y + j * c;
      double acc = 0.0;
      for (std::size_t p = 0; p < c; ++p) acc += xrow[p] * yrow[p];
      crow[j] += acc;
    }
  }
}

// C[m x n] += X^T * Y with X stored [c x m], Y stored [c x n]
inline void mm_tn_acc(const double* X, const double* Y, double* C, std::size_t m, std::size_t c,
                      std::size_t n) {
  for (std::size_t p = 0; p < c; ++p) {
    const double* xrow = X + p * m;
    const double* yrow = Y + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      double x = xrow[i];
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += x * yrow[j];
    }
  }
}

enum class BinLayout { Same, MatVec, VecMat };

inline BinLayout binary_layout(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return BinLayout::Same;
  if (a.rank() == 2 && b.rank() == 1 && b.size() == a.shape()[1]) return BinLayout::MatVec;
  if (a.rank() == 1 && b.rank() == 2 && a.size() == b.shape()[1]) return BinLayout::VecMat;
  fail(Err::ShapeMismatch, std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                               " and " + shape_str(b.shape()));
}

}  // namespace detail

// ---- elementwise binary ops (same shape, or matrix with trailing bias vector) ----

inline Tensor add(const Tensor& a, const Tensor& b) {
  using detail::BinLayout;
  BinLayout lay = detail::binary_layout(a, b, "add");
  const Tensor& m = (lay == BinLayout::VecMat) ? b : a;
  const Tensor& v = (lay == BinLayout::VecMat) ? a : b;
  std::vector<double> out(m.size());
  if (lay == BinLayout::Same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.raw()[i] + b.raw()[i];
  } else {
    std::size_t rows = m.shape()[0], cols = m.shape()[1];
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = m.raw()[i * cols + j] + v.raw()[j];
  }
  Tensor c(m.shape(), std::move(out));
  Tape* tp = Tape::active();
  bool ta = detail::tracked(a, tp), tb = detail::tracked(b, tp);
  if (!ta && !tb) return c;
  int pa = ta ? a.node_id() : -1, pb = tb ? b.node_id() : -1;
  Shape msh = m.shape();
  bool a_is_vec = (lay == BinLayout::VecMat);
  bool broadcast = (lay != BinLayout::Same);
  tp->attach(c, "add", [pa, pb, msh, broadcast, a_is_vec](const std::vector<double>& g,
                                                          GradientMap& gm) {
    int pm = a_is_vec ? pb : pa;
    int pv = a_is_vec ? pa : pb;
    if (!broadcast) {
      if (pa >= 0) {
        auto& ba = gm.buffer(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ba[i] += g[i];
      }
      if (pb >= 0) {
        auto& bb = gm.buffer(pb);
        for (std::size_t i = 0; i < g.size(); ++i) bb[i] += g[i];
      }
      return;
    }
    std::size_t rows = msh[0], cols = msh[1];
    if (pm >= 0) {
      auto& bm = gm.buffer(pm);
      for (std::size_t i = 0; i < g.size(); ++i) bm[i] += g[i];
    }
    if (pv >= 0) {
      auto& bv = gm.buffer(pv);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) bv[j] += g[i * cols + j];
    }
  });
  return c;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  using detail::BinLayout;
  BinLayout lay = detail::binary_layout(a, b, "sub");
  const Tensor& m = (lay == BinLayout::VecMat) ? b : a;
  std::vector<double> out(m.size());
  if (lay == BinLayout::Same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.raw()[i] - b.raw()[i];
  } else if (lay == BinLayout::MatVec) {
    std::size_t rows = a.shape()[0], cols = a.shape()[1];
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = a.raw()[i * cols + j] - b.raw()[j];
  } else {
    std::size_t rows = b.shape()[0], cols = b.shape()[1];
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = a.raw()[j] - b.raw()[i * cols + j];
  }
  Tensor c(m.shape(), std::move(out));
  Tape* tp = Tape::active();
  bool ta = detail::tracked(a, tp), tb = detail::tracked(b, tp);
  if (!ta && !tb) return c;
  int pa = ta ? a.node_id() : -1, pb = tb ? b.node_id() : -1;
  Shape msh = m.shape();
  int laycode = (lay == BinLayout::Same) ? 0 : (lay == BinLayout::MatVec ? 1 : 2);
  tp->attach(c, "sub", [pa, pb, msh, laycode](const std::vector<double>& g, GradientMap& gm) {
    std::size_t rows = msh.size() == 2 ? msh[0] : 0, cols = msh.size() == 2 ? msh[1] : 0;
    if (pa >= 0) {
      auto& ba = gm.buffer(pa);
      if (laycode == 2) {
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) ba[j] += g[i * cols + j];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ba[i] += g[i];
      }
    }
    if (pb >= 0) {
      auto& bb = gm.buffer(pb);
      if (laycode == 1) {
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) bb[j] -= g[i * cols + j];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) bb[i] -= g[i];
      }
    }
  });
  return c;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  using detail::BinLayout;
  BinLayout lay = detail::binary_layout(a, b, "mul");
  const Tensor& m = (lay == BinLayout::VecMat) ? b : a;
  const Tensor& v = (lay == BinLayout::VecMat) ? a : b;
  std::vector<double> out(m.size());
  if (lay == BinLayout::Same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.raw()[i] * b.raw()[i];
  } else {
    std::size_t rows = m.shape()[0], cols = m.shape()[1];
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = m.raw()[i * cols + j] * v.raw()[j];
  }
  Tensor c(m.shape(), std::move(out));
  Tape* tp = Tape::active();
  bool ta = detail::tracked(a, tp), tb = detail::tracked(b, tp);
  if (!ta && !tb) return c;
  int pa = ta ? a.node_id() : -1, pb = tb ? b.node_id() : -1;
  bool a_is_vec = (lay == BinLayout::VecMat);
  bool broadcast = (lay != BinLayout::Same);
  Tensor av = a.detached(), bv = b.detached();
  tp->attach(c, "mul", [pa, pb, av, bv, broadcast, a_is_vec](const std::vector<double>& g,
                                                             GradientMap& gm) {
    if (!broadcast) {
      if (pa >= 0) {
        auto& ba = gm.buffer(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ba[i] += g[i] * bv.raw()[i];
      }
      if (pb >= 0) {
        auto& bb = gm.buffer(pb);
        for (std::size_t i = 0; i < g.size(); ++i) bb[i] += g[i] * av.raw()[i];
      }
      return;
    }
    const Tensor& mt = a_is_vec ? bv : av;
    const Tensor& vt = a_is_vec ? av : bv;
    int pm = a_is_vec ? pb : pa;
    int pv = a_is_vec ? pa : pb;
    std::size_t rows = mt.shape()[0], cols = mt.shape()[1];
    if (pm >= 0) {
      auto& bm = gm.buffer(pm);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) bm[i * cols + j] += g[i * cols + j] * vt.raw()[j];
    }
    if (pv >= 0) {
      auto& bv2 = gm.buffer(pv);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) bv2[j] += g[i * cols + j] * mt.raw()[i * cols + j];
    }
  });
  return c;
}

// ---- elementwise unary ops ----

namespace detail {

template <typename Fwd, typename MakePull>
Tensor unary_op(const Tensor& a, const char* kind, Fwd fwd, MakePull make_pull) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fwd(a.raw()[i]);
  Tensor c(a.shape(), std::move(out));
  Tape* tp = Tape::active();
  if (!tracked(a, tp)) return c;
  tp->attach(c, kind, make_pull(a.node_id(), a, c));
  return c;
}

}  // namespace detail

inline Tensor neg(const Tensor& a) {
  return detail::unary_op(
      a, "neg", [](double x) { return -x; },
      [](int pa, const Tensor&, const Tensor&) {
        return [pa](const std::vector<double>& g, GradientMap& gm) {
          auto& b = gm.buffer(pa);
          for (std::size_t i = 0; i < g.size(); ++i) b[i] -= g[i];
        };
      });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](int pa, const Tensor& in, const Tensor&) {
        Tensor iv = in.detached();
        return [pa, iv](const std::vector<double>& g, GradientMap& gm) {
          auto& b = gm.buffer(pa);
          for (std::size_t i = 0; i < g.size(); ++i)
            if (iv.raw()[i] > 0.0) b[i] += g[i];
        };
      });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_op(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](int pa, const Tensor&, const Tensor& out) {
        Tensor ov = out.detached();
        return [pa, ov](const std::vector<double>& g, GradientMap& gm) {
          auto& b = gm.buffer(pa);
          for (std::size_t i = 0; i < g.size(); ++i) {
            double s = ov.raw()[i];
            b[i] += g[i] * s * (1.0 - s);
          }
        };
      });
}

inline Tensor exp(const Tensor& a) {
  Tensor c = detail::unary_op(
      a, "exp", [](double x) { return std::exp(x); },
      [](int pa, const Tensor&, const Tensor& out) {
        Tensor ov = out.detached();
        return [pa, ov](const std::vector<double>& g, GradientMap& gm) {
          auto& b = gm.buffer(pa);
          for (std::size_t i = 0; i < g.size(); ++i) b[i] += g[i] * ov.raw()[i];
        };
      });
  if (!c.all_finite()) fail(Err::DomainError, "exp overflowed to non-finite values");
  return c;
}

inline Tensor log(const Tensor& a) {
  for (double v : a.data())
    if (!(v > 0.0)) fail(Err::DomainError, "log needs strictly positive input");
  return detail::unary_op(
      a, "log", [](double x) { return std::log(x); },
      [](int pa, const Tensor& in, const Tensor&) {
        Tensor iv = in.detached();
        return [pa, iv](const std::vector<double>& g, GradientMap& gm) {
          auto& b = gm.buffer(pa);
          for (std::size_t i = 0; i < g.size(); ++i) b[i] += g[i] / iv.raw()[i];
        };
      });
}

inline Tensor square(const Tensor& a) {
  return detail::unary_op(
      a, "square", [](double x) { return x * x; },
      [](int pa, const Tensor& in, const Tensor&) {
        Tensor iv = in.detached();
        return [pa, iv](const std::vector<double>& g, GradientMap& gm) {
          auto& b = gm.buffer(pa);
          for (std::size_t i = 0; i < g.size(); ++i) b[i] += g[i] * 2.0 * iv.raw()[i];
        };
      });
}

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary_op(
      a, "scale", [c](double x) { return c * x; },
      [c](int pa, const Tensor&, const Tensor&) {
        return [pa, c](const std::vector<double>& g, GradientMap& gm) {
          auto& b = gm.buffer(pa);
          for (std::size_t i = 0; i < g.size(); ++i) b[i] += c * g[i];
        };
      });
}

// Single-dispatch form of the elementwise family.
enum class EwOp { Add, Sub, Mul, Neg, Relu, Sigmoid, Exp, Log, Square };

inline Tensor elementwise(EwOp op, const Tensor& a) {
  switch (op) {
    case EwOp::Neg: return neg(a);
    case EwOp::Relu: return relu(a);
    case EwOp::Sigmoid: return sigmoid(a);
    case EwOp::Exp: return exp(a);
    case EwOp::Log: return log(a);
    case EwOp::Square: return square(a);
    default: fail(Err::UnknownKind, "binary elementwise op called with one operand");
  }
}

inline Tensor elementwise(EwOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case EwOp::Add: return add(a, b);
    case EwOp::Sub: return sub(a, b);
    case EwOp::Mul: return mul(a, b);
    default: fail(Err::UnknownKind, "unary elementwise op called with two operands");
  }
}

// ---- matmul ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    fail(Err::ShapeMismatch, "matmul needs rank-2 operands, got " + shape_str(a.shape()) + " and " +
                                 shape_str(b.shape()));
  std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    fail(Err::ShapeMismatch,
         "matmul inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  detail::mm_acc(a.raw(), b.raw(), out.data(), m, k, n);
  Tensor c(Shape{m, n}, std::move(out));
  Tape* tp = Tape::active();
  bool ta = detail::tracked(a, tp), tb = detail::tracked(b, tp);
  if (!ta && !tb) return c;
  int pa = ta ? a.node_id() : -1, pb = tb ? b.node_id() : -1;
  Tensor av = a.detached(), bv = b.detached();
  tp->attach(c, "matmul", [pa, pb, av, bv, m, k, n](const std::vector<double>& g, GradientMap& gm) {
    if (pa >= 0) detail::mm_nt_acc(g.data(), bv.raw(), gm.buffer(pa).data(), m, n, k);
    if (pb >= 0) detail::mm_tn_acc(av.raw(), g.data(), gm.buffer(pb).data(), k, m, n);
  });
  return c;
}

// ---- reductions ----

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor c = Tensor::scalar(s);
  Tape* tp = Tape::active();
  if (!detail::tracked(a, tp)) return c;
  int pa = a.node_id();
  std::size_t count = a.size();
  tp->attach(c, "sum", [pa, count](const std::vector<double>& g, GradientMap& gm) {
    auto& b = gm.buffer(pa);
    for (std::size_t i = 0; i < count; ++i) b[i] += g[0];
  });
  return c;
}

inline Tensor mean(const Tensor& a) {
  if (a.size() == 0) fail(Err::DomainError, "mean of an empty tensor");
  double s = 0.0;
  for (double v : a.data()) s += v;
  double inv = 1.0 / static_cast<double>(a.size());
  Tensor c = Tensor::scalar(s * inv);
  Tape* tp = Tape::active();
  if (!detail::tracked(a, tp)) return c;
  int pa = a.node_id();
  std::size_t count = a.size();
  tp->attach(c, "mean", [pa, count, inv](const std::vector<double>& g, GradientMap& gm) {
    auto& b = gm.buffer(pa);
    for (std::size_t i = 0; i < count; ++i) b[i] += g[0] * inv;
  });
  return c;
}

namespace detail {

inline Tensor reduce_axis(const Tensor& a, std::size_t axis, bool take_mean, const char* kind) {
  if (axis >= a.rank())
    fail(Err::AxisOutOfRange,
         std::string(kind) + ": axis " + std::to_string(axis) + " for rank " + std::to_string(a.rank()));
  if (a.rank() == 1) return take_mean ? mean(a) : sum(a);
  if (a.rank() != 2) fail(Err::DomainError, "axis reductions support rank 1 or 2");
  std::size_t rows = a.shape()[0], cols = a.shape()[1];
  std::size_t outn = (axis == 0) ? cols : rows;
  std::size_t reduced = (axis == 0) ? rows : cols;
  if (take_mean && reduced == 0) fail(Err::DomainError, "mean over an empty axis");
  double inv = take_mean ? 1.0 / static_cast<double>(reduced) : 1.0;
  std::vector<double> out(outn, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[axis == 0 ? j : i] += a.raw()[i * cols + j];
  if (take_mean)
    for (auto& v : out) v *= inv;
  Tensor c(Shape{outn}, std::move(out));
  Tape* tp = Tape::active();
  if (!tracked(a, tp)) return c;
  int pa = a.node_id();
  tp->attach(c, kind, [pa, rows, cols, axis, inv](const std::vector<double>& g, GradientMap& gm) {
    auto& b = gm.buffer(pa);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) b[i * cols + j] += g[axis == 0 ? j : i] * inv;
  });
  return c;
}

}  // namespace detail

inline Tensor sum(const Tensor& a, std::size_t axis) { return detail::reduce_axis(a, axis, false, "sum_axis"); }
inline Tensor mean(const Tensor& a, std::size_t axis) { return detail::reduce_axis(a, axis, true, "mean_axis"); }

// ---- shape ops ----

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    fail(Err::LengthMismatch,
         "reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes element count");
  Tensor c(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  Tape* tp = Tape::active();
  if (!detail::tracked(a, tp)) return c;
  int pa = a.node_id();
  tp->attach(c, "reshape", [pa](const std::vector<double>& g, GradientMap& gm) {
    auto& b = gm.buffer(pa);
    for (std::size_t i = 0; i < g.size(); ++i) b[i] += g[i];
  });
  return c;
}

inline Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank()) fail(Err::ShapeMismatch, "concat needs equal ranks");
  if (a.rank() == 0 || a.rank() > 2) fail(Err::DomainError, "concat supports rank 1 or 2");
  if (axis >= a.rank()) fail(Err::AxisOutOfRange, "concat axis out of range");
  for (std::size_t d = 0; d < a.rank(); ++d)
    if (d != axis && a.shape()[d] != b.shape()[d])
      fail(Err::ShapeMismatch, "concat: off-axis dims differ, " + shape_str(a.shape()) + " vs " +
                                   shape_str(b.shape()));
  Shape osh = a.shape();
  osh[axis] += b.shape()[axis];
  std::vector<double> out(shape_numel(osh));
  std::size_t an = a.size();
  if (a.rank() == 1 || axis == 0) {
    std::copy(a.data().begin(), a.data().end(), out.begin());
    std::copy(b.data().begin(), b.data().end(), out.begin() + static_cast<std::ptrdiff_t>(an));
  } else {
    std::size_t rows = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy_n(a.raw() + i * ca, ca, out.data() + i * (ca + cb));
      std::copy_n(b.raw() + i * cb, cb, out.data() + i * (ca + cb) + ca);
    }
  }
  Tensor c(osh, std::move(out));
  Tape* tp = Tape::active();
  bool ta = detail::tracked(a, tp), tb = detail::tracked(b, tp);
  if (!ta && !tb) return c;
  int pa = ta ? a.node_id() : -1, pb = tb ? b.node_id() : -1;
  bool rowwise = (a.rank() == 1 || axis == 0);
  std::size_t rows = a.rank() == 2 ? a.shape()[0] : 0;
  std::size_t ca = a.rank() == 2 ? a.shape()[1] : a.size();
  std::size_t cb = b.rank() == 2 ? b.shape()[1] : b.size();
  tp->attach(c, "concat",
             [pa, pb, an, rowwise, rows, ca, cb](const std::vector<double>& g, GradientMap& gm) {
               if (rowwise) {
                 if (pa >= 0) {
                   auto& ba = gm.buffer(pa);
                   for (std::size_t i = 0; i < an; ++i) ba[i] += g[i];
                 }
                 if (pb >= 0) {
                   auto& bb = gm.buffer(pb);
                   for (std::size_t i = an; i < g.size(); ++i) bb[i - an] += g[i];
                 }
                 return;
               }
               std::size_t stride = ca + cb;
               if (pa >= 0) {
                 auto& ba = gm.buffer(pa);
                 for (std::size_t i = 0; i < rows; ++i)
                   for (std::size_t j = 0; j < ca; ++j) ba[i * ca + j] += g[i * stride + j];
               }
               if (pb >= 0) {
                 auto& bb = gm.buffer(pb);
                 for (std::size_t i = 0; i < rows; ++i)
                   for (std::size_t j = 0; j < cb; ++j) bb[i * cb + j] += g[i * stride + ca + j];
               }
             });
  return c;
}

// ---- sort ----

struct SortResult {
  Tensor values;
  std::vector<std::size_t> perm;  // values[i] == input[perm[i]]
};

// Ascending stable sort of a 1-D tensor; ties keep their original order.
inline SortResult sort_ascending_with_permutation(const Tensor& a) {
  if (a.rank() != 1) fail(Err::DomainError, "sort needs a rank-1 tensor");
  if (!a.all_finite()) fail(Err::DomainError, "sort needs finite values");
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&a](std::size_t i, std::size_t j) { return a.raw()[i] < a.raw()[j]; });
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.raw()[perm[i]];
  Tensor c(a.shape(), std::move(out));
  Tape* tp = Tape::active();
  if (!detail::tracked(a, tp)) return {std::move(c), std::move(perm)};
  int pa = a.node_id();
  std::vector<std::size_t> perm_copy = perm;
  tp->attach(c, "sort", [pa, perm_copy](const std::vector<double>& g, GradientMap& gm) {
    auto& b = gm.buffer(pa);
    for (std::size_t i = 0; i < g.size(); ++i) b[perm_copy[i]] += g[i];
  });
  return {std::move(c), std::move(perm)};
}

}  // namespace ltbr
