#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "filterts/common.hpp"

namespace filterts {

using Shape = std::vector<std::size_t>;

namespace tensor_detail {

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline void check_shape(const Shape& s) {
  if (s.empty()) throw contract_error("tensor shape must have rank >= 1");
  for (std::size_t d : s)
    if (d == 0) throw contract_error("tensor shape axes must be >= 1");
}

// Right-aligned (numpy-style) broadcast of two shapes.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1)
      throw dimension_error("shapes not broadcast-compatible");
    out[i] = std::max(da, db);
  }
  return out;
}

// Element strides for iterating `in` over the broadcast output `out`;
// broadcast axes get stride 0.
inline std::vector<std::size_t> broadcast_strides(const Shape& in,
                                                  const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  std::size_t acc = 1;
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    st[off + i] = (in[i] == 1 && out[off + i] != 1) ? 0 : acc;
    acc *= in[i];
  }
  return st;
}

// Visit every element of the broadcast output space, handing the callback
// the output linear index plus the matching offsets into a and b.
template <class F>
inline void for_each_bcast(const Shape& out, const Shape& a, const Shape& b,
                           F&& f) {
  const std::size_t n = numel(out);
  if (a == out && b == out) {  // no broadcasting: flat loop
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t an = numel(a);
  const std::size_t bn = numel(b);
  const bool a_full = (a.size() == out.size() && an == n);
  const bool b_full = (b.size() == out.size() && bn == n);
  auto is_suffix = [&](const Shape& s) {
    if (s.size() > out.size()) return false;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[s.size() - 1 - i] != out[out.size() - 1 - i]) return false;
    return true;
  };
  if (a_full && bn == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, 0);
    return;
  }
  if (b_full && an == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i, 0, i);
    return;
  }
  if (a_full && is_suffix(b)) {  // b repeats as a contiguous tail block
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      f(i, i, j);
      if (++j == bn) j = 0;
    }
    return;
  }
  if (b_full && is_suffix(a)) {
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      f(i, j, i);
      if (++j == an) j = 0;
    }
    return;
  }
  // generic odometer walk
  const auto sa = broadcast_strides(a, out);
  const auto sb = broadcast_strides(b, out);
  const std::size_t rank = out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ao = 0, bo = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ao, bo);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ao += sa[d];
      bo += sb[d];
      if (idx[d] < out[d]) break;
      idx[d] = 0;
      ao -= sa[d] * out[d];
      bo -= sb[d] * out[d];
    }
  }
}

// --- small real GEMM kernels (row-major, accumulating) ---

// C(M,P) += sign * A(M,K) * B(K,P)
inline void gemm_nn(std::size_t M, std::size_t K, std::size_t P,
                    const double* A, const double* B, double* C, double sign) {
  for (std::size_t m = 0; m < M; ++m) {
    const double* a_row = A + m * K;
    double* c_row = C + m * P;
    for (std::size_t k = 0; k < K; ++k) {
      const double a = sign * a_row[k];
      if (a == 0.0) continue;
      const double* b_row = B + k * P;
      for (std::size_t p = 0; p < P; ++p) c_row[p] += a * b_row[p];
    }
  }
}

// C(M,K) += sign * G(M,P) * B(K,P)^T
inline void gemm_nt(std::size_t M, std::size_t P, std::size_t K,
                    const double* G, const double* B, double* C, double sign) {
  for (std::size_t m = 0; m < M; ++m) {
    const double* g_row = G + m * P;
    double* c_row = C + m * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double* b_row = B + k * P;
      double acc = 0.0;
      for (std::size_t p = 0; p < P; ++p) acc += g_row[p] * b_row[p];
      c_row[k] += sign * acc;
    }
  }
}

// C(K,P) += sign * A(M,K)^T * G(M,P)
inline void gemm_tn(std::size_t M, std::size_t K, std::size_t P,
                    const double* A, const double* G, double* C, double sign) {
  for (std::size_t m = 0; m < M; ++m) {
    const double* a_row = A + m * K;
    const double* g_row = G + m * P;
    for (std::size_t k = 0; k < K; ++k) {
      const double a = sign * a_row[k];
      if (a == 0.0) continue;
      double* c_row = C + k * P;
      for (std::size_t p = 0; p < P; ++p) c_row[p] += a * g_row[p];
    }
  }
}

}  // namespace tensor_detail

/// Dense complex tensor participating in a reverse-mode autodiff graph.
///
/// Storage is split real/imaginary double buffers of identical length. A
/// tensor is real-typed when its imaginary buffer is identically zero; ops
/// that require realness check the flag. Values are immutable once a node
/// is created, except for trainable leaves whose values the optimizer
/// updates between graph builds and whose grad slots backward() fills.
/// Gradients follow the split-real convention: Re and Im are independent
/// real coordinates.
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> re, im;
    bool real_typed = true;
    bool trainable = false;
    // a trainable leaf whose imaginary coordinates are free parameters, even
    // if they happen to be zero right now (e.g. at initialization)
    bool complex_param = false;
    std::string name;

    // persistent grad slots (trainable leaves only)
    std::vector<double> grad_re, grad_im;

    // transient upstream gradients during one backward() run; empty means
    // "identically zero"
    std::vector<double> tg_re, tg_im;

    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::size_t numel() const { return re.size(); }
    std::vector<double>& tg_re_buf() {
      if (tg_re.empty()) tg_re.assign(numel(), 0.0);
      return tg_re;
    }
    std::vector<double>& tg_im_buf() {
      if (tg_im.empty()) tg_im.assign(numel(), 0.0);
      return tg_im;
    }
  };

  Tensor() = default;

  static Tensor from_real(Shape shape, std::vector<double> values) {
    tensor_detail::check_shape(shape);
    if (values.size() != tensor_detail::numel(shape))
      throw dimension_error("from_real: value count does not match shape");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->re = std::move(values);
    n->im.assign(n->re.size(), 0.0);
    n->real_typed = true;
    return Tensor(std::move(n));
  }

  static Tensor from_complex(Shape shape, std::vector<double> re,
                             std::vector<double> im) {
    tensor_detail::check_shape(shape);
    const std::size_t n = tensor_detail::numel(shape);
    if (re.size() != n || im.size() != n)
      throw dimension_error("from_complex: buffer sizes do not match shape");
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->re = std::move(re);
    node->im = std::move(im);
    node->real_typed =
        std::all_of(node->im.begin(), node->im.end(),
                    [](double v) { return v == 0.0; });
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape) {
    tensor_detail::check_shape(shape);
    const std::size_t n = tensor_detail::numel(shape);
    return from_real(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor scalar(double v) { return from_real({1}, {v}); }

  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t numel() const { return node().re.size(); }
  bool defined() const { return n_ != nullptr; }
  bool real_typed() const { return node().real_typed; }
  bool trainable() const { return node().trainable; }
  bool is_leaf() const { return node().parents.empty(); }
  const std::string& name() const { return node().name; }

  const std::vector<double>& re() const { return node().re; }
  const std::vector<double>& im() const { return node().im; }
  const std::vector<double>& grad_re() const { return node().grad_re; }
  const std::vector<double>& grad_im() const { return node().grad_im; }

  /// Scalar value convenience (numel must be 1).
  double value() const {
    if (numel() != 1) throw contract_error("value(): tensor is not scalar");
    return node().re[0];
  }

  /// Marks a leaf as a trainable parameter and allocates its grad slots.
  /// `complex_coords` declares whether the imaginary coordinates are free
  /// parameters too (they may be zero-valued at initialization).
  Tensor& mark_trainable(std::string name = "", bool complex_coords = false) {
    if (!is_leaf())
      throw contract_error("mark_trainable: only leaves can be parameters");
    Node& n = node();
    n.trainable = true;
    n.complex_param = complex_coords;
    if (!name.empty()) n.name = std::move(name);
    n.grad_re.assign(n.numel(), 0.0);
    n.grad_im.assign(n.numel(), 0.0);
    return *this;
  }

  bool complex_param() const { return node().complex_param; }

  void zero_grad() {
    Node& n = node();
    std::fill(n.grad_re.begin(), n.grad_re.end(), 0.0);
    std::fill(n.grad_im.begin(), n.grad_im.end(), 0.0);
  }

  /// Mutable value access for optimizer updates. Leaves only: interior
  /// nodes are immutable by contract.
  std::vector<double>& values_re_mut() {
    if (!is_leaf()) throw contract_error("values are immutable on non-leaves");
    return node().re;
  }
  std::vector<double>& values_im_mut() {
    if (!is_leaf()) throw contract_error("values are immutable on non-leaves");
    return node().im;
  }
  /// Re-derive the real-typed flag after in-place leaf updates.
  void refresh_real_typed() {
    Node& n = node();
    n.real_typed = std::all_of(n.im.begin(), n.im.end(),
                               [](double v) { return v == 0.0; });
  }

  Node& node() {
    if (!n_) throw contract_error("use of an empty Tensor");
    return *n_;
  }
  const Node& node() const {
    if (!n_) throw contract_error("use of an empty Tensor");
    return *n_;
  }
  const std::shared_ptr<Node>& handle() const { return n_; }

  static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
  std::shared_ptr<Node> n_;
};

namespace tensor_detail {

inline std::shared_ptr<Tensor::Node> make_result(
    Shape shape, bool real_typed, std::vector<std::shared_ptr<Tensor::Node>>
                                      parents) {
  auto n = std::make_shared<Tensor::Node>();
  n->shape = std::move(shape);
  const std::size_t count = numel(n->shape);
  n->re.assign(count, 0.0);
  n->im.assign(count, 0.0);
  n->real_typed = real_typed;
  n->parents = std::move(parents);
  return n;
}

}  // namespace tensor_detail

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

namespace tensor_detail {

enum class EwKind { Add, Sub, Mul, ConjMul };

inline Tensor elementwise(const Tensor& a, const Tensor& b, EwKind kind) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const bool out_real = a.real_typed() && b.real_typed();
  auto n = make_result(out_shape, out_real, {a.handle(), b.handle()});

  const auto& ar = a.re();
  const auto& ai = a.im();
  const auto& br = b.re();
  const auto& bi = b.im();
  auto& outr = n->re;
  auto& outi = n->im;

  switch (kind) {
    case EwKind::Add:
      for_each_bcast(out_shape, a.shape(), b.shape(),
                     [&](std::size_t i, std::size_t pa, std::size_t pb) {
                       outr[i] = ar[pa] + br[pb];
                       outi[i] = ai[pa] + bi[pb];
                     });
      break;
    case EwKind::Sub:
      for_each_bcast(out_shape, a.shape(), b.shape(),
                     [&](std::size_t i, std::size_t pa, std::size_t pb) {
                       outr[i] = ar[pa] - br[pb];
                       outi[i] = ai[pa] - bi[pb];
                     });
      break;
    case EwKind::Mul:
      for_each_bcast(out_shape, a.shape(), b.shape(),
                     [&](std::size_t i, std::size_t pa, std::size_t pb) {
                       outr[i] = ar[pa] * br[pb] - ai[pa] * bi[pb];
                       outi[i] = ar[pa] * bi[pb] + ai[pa] * br[pb];
                     });
      break;
    case EwKind::ConjMul:  // a * conj(b)
      for_each_bcast(out_shape, a.shape(), b.shape(),
                     [&](std::size_t i, std::size_t pa, std::size_t pb) {
                       outr[i] = ar[pa] * br[pb] + ai[pa] * bi[pb];
                       outi[i] = ai[pa] * br[pb] - ar[pa] * bi[pb];
                     });
      break;
  }

  auto pa = a.handle();
  auto pb = b.handle();
  const Shape sa = a.shape(), sb = b.shape();
  n->backward_fn = [pa, pb, sa, sb, out_shape, kind](Tensor::Node& self) {
    const bool has_gr = !self.tg_re.empty();
    const bool has_gi = !self.tg_im.empty();
    if (!has_gr && !has_gi) return;
    const auto& gr = self.tg_re;
    const auto& gi = self.tg_im;
    const auto& ar = pa->re;
    const auto& ai = pa->im;
    const auto& br = pb->re;
    const auto& bi = pb->im;

    // sums the gradient over broadcast axes of the parent; skips parts whose
    // upstream gradient is identically zero
    auto pass = [&](Tensor::Node& parent, const Shape& pshape,
                    const std::vector<double>& g, bool to_im, double sgn) {
      if (g.empty()) return;
      auto& d = to_im ? parent.tg_im_buf() : parent.tg_re_buf();
      for_each_bcast(out_shape, pshape, out_shape,
                     [&](std::size_t i, std::size_t pp, std::size_t) {
                       d[pp] += sgn * g[i];
                     });
    };
    auto g_re = [&](std::size_t i) { return has_gr ? gr[i] : 0.0; };
    auto g_im = [&](std::size_t i) { return has_gi ? gi[i] : 0.0; };

    switch (kind) {
      case EwKind::Add:
        pass(*pa, sa, gr, false, 1.0);
        pass(*pa, sa, gi, true, 1.0);
        pass(*pb, sb, gr, false, 1.0);
        pass(*pb, sb, gi, true, 1.0);
        break;
      case EwKind::Sub:
        pass(*pa, sa, gr, false, 1.0);
        pass(*pa, sa, gi, true, 1.0);
        pass(*pb, sb, gr, false, -1.0);
        pass(*pb, sb, gi, true, -1.0);
        break;
      case EwKind::Mul: {
        // needs b at output resolution: recompute offsets per element
        auto& are_g = pa->tg_re_buf();
        auto& aim_g = pa->tg_im_buf();
        auto& bre_g = pb->tg_re_buf();
        auto& bim_g = pb->tg_im_buf();
        for_each_bcast(out_shape, sa, sb,
                       [&](std::size_t i, std::size_t qa, std::size_t qb) {
                         const double grv = g_re(i), giv = g_im(i);
                         // grad_a = g * conj(b)
                         are_g[qa] += grv * br[qb] + giv * bi[qb];
                         aim_g[qa] += -grv * bi[qb] + giv * br[qb];
                         // grad_b = g * conj(a)
                         bre_g[qb] += grv * ar[qa] + giv * ai[qa];
                         bim_g[qb] += -grv * ai[qa] + giv * ar[qa];
                       });
        break;
      }
      case EwKind::ConjMul: {
        auto& are_g = pa->tg_re_buf();
        auto& aim_g = pa->tg_im_buf();
        auto& bre_g = pb->tg_re_buf();
        auto& bim_g = pb->tg_im_buf();
        for_each_bcast(out_shape, sa, sb,
                       [&](std::size_t i, std::size_t qa, std::size_t qb) {
                         const double grv = g_re(i), giv = g_im(i);
                         // grad_a = g * b
                         are_g[qa] += grv * br[qb] - giv * bi[qb];
                         aim_g[qa] += grv * bi[qb] + giv * br[qb];
                         // grad_b = conj(g) * a
                         bre_g[qb] += grv * ar[qa] + giv * ai[qa];
                         bim_g[qb] += grv * ai[qa] - giv * ar[qa];
                       });
        break;
      }
    }
  };
  return Tensor::wrap(std::move(n));
}

}  // namespace tensor_detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return tensor_detail::elementwise(a, b, tensor_detail::EwKind::Add);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return tensor_detail::elementwise(a, b, tensor_detail::EwKind::Sub);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return tensor_detail::elementwise(a, b, tensor_detail::EwKind::Mul);
}
/// a * conj(b), elementwise.
inline Tensor conj_mul(const Tensor& a, const Tensor& b) {
  return tensor_detail::elementwise(a, b, tensor_detail::EwKind::ConjMul);
}

/// Elementwise division; the denominator must be real-typed.
inline Tensor div(const Tensor& a, const Tensor& b) {
  if (!b.real_typed())
    throw contract_error("div: denominator must be real-typed");
  const Shape out_shape =
      tensor_detail::broadcast_shape(a.shape(), b.shape());
  auto n = tensor_detail::make_result(out_shape, a.real_typed(),
                                      {a.handle(), b.handle()});
  const auto& ar = a.re();
  const auto& ai = a.im();
  const auto& br = b.re();
  auto& outr = n->re;
  auto& outi = n->im;
  tensor_detail::for_each_bcast(
      out_shape, a.shape(), b.shape(),
      [&](std::size_t i, std::size_t pa, std::size_t pb) {
        outr[i] = ar[pa] / br[pb];
        outi[i] = ai[pa] / br[pb];
      });
  auto pa = a.handle();
  auto pb = b.handle();
  const Shape sa = a.shape(), sb = b.shape();
  n->backward_fn = [pa, pb, sa, sb, out_shape](Tensor::Node& self) {
    const bool has_gr = !self.tg_re.empty();
    const bool has_gi = !self.tg_im.empty();
    if (!has_gr && !has_gi) return;
    const auto& gr = self.tg_re;
    const auto& gi = self.tg_im;
    const auto& ar = pa->re;
    const auto& ai = pa->im;
    const auto& br = pb->re;
    auto& are_g = pa->tg_re_buf();
    auto& aim_g = pa->tg_im_buf();
    auto& bre_g = pb->tg_re_buf();
    tensor_detail::for_each_bcast(
        out_shape, sa, sb, [&](std::size_t i, std::size_t qa, std::size_t qb) {
          const double grv = has_gr ? gr[i] : 0.0;
          const double giv = has_gi ? gi[i] : 0.0;
          const double inv = 1.0 / br[qb];
          are_g[qa] += grv * inv;
          aim_g[qa] += giv * inv;
          bre_g[qb] -= (grv * ar[qa] + giv * ai[qa]) * inv * inv;
        });
  };
  return Tensor::wrap(std::move(n));
}

inline Tensor neg(const Tensor& a) {
  auto n = tensor_detail::make_result(a.shape(), a.real_typed(), {a.handle()});
  for (std::size_t i = 0; i < a.numel(); ++i) {
    n->re[i] = -a.re()[i];
    n->im[i] = -a.im()[i];
  }
  auto pa = a.handle();
  n->backward_fn = [pa](Tensor::Node& self) {
    if (!self.tg_re.empty()) {
      auto& d = pa->tg_re_buf();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= self.tg_re[i];
    }
    if (!self.tg_im.empty()) {
      auto& d = pa->tg_im_buf();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= self.tg_im[i];
    }
  };
  return Tensor::wrap(std::move(n));
}

inline Tensor scale(const Tensor& a, double c) {
  auto n = tensor_detail::make_result(a.shape(), a.real_typed(), {a.handle()});
  for (std::size_t i = 0; i < a.numel(); ++i) {
    n->re[i] = c * a.re()[i];
    n->im[i] = c * a.im()[i];
  }
  auto pa = a.handle();
  n->backward_fn = [pa, c](Tensor::Node& self) {
    if (!self.tg_re.empty()) {
      auto& d = pa->tg_re_buf();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * self.tg_re[i];
    }
    if (!self.tg_im.empty()) {
      auto& d = pa->tg_im_buf();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * self.tg_im[i];
    }
  };
  return Tensor::wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

/// Batched complex matrix product [..., M, K] x [..., K, P] -> [..., M, P].
/// Leading batch axes broadcast numpy-style. Real-typed inputs produce a
/// real-typed output and skip the imaginary GEMMs entirely.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  using namespace tensor_detail;
  if (a.rank() < 2 || b.rank() < 2)
    throw dimension_error("matmul: operands must have rank >= 2");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t M = as[as.size() - 2];
  const std::size_t K = as[as.size() - 1];
  const std::size_t K2 = bs[bs.size() - 2];
  const std::size_t P = bs[bs.size() - 1];
  if (K != K2) throw dimension_error("matmul: inner axes disagree");

  const Shape a_batch(as.begin(), as.end() - 2);
  const Shape b_batch(bs.begin(), bs.end() - 2);
  const Shape batch = a_batch.empty() && b_batch.empty()
                          ? Shape{}
                          : broadcast_shape(a_batch.empty() ? Shape{1} : a_batch,
                                            b_batch.empty() ? Shape{1} : b_batch);
  Shape out_shape = batch;
  out_shape.push_back(M);
  out_shape.push_back(P);

  const bool out_real = a.real_typed() && b.real_typed();
  auto n = make_result(out_shape, out_real, {a.handle(), b.handle()});

  const std::size_t nbatch = batch.empty() ? 1 : numel(batch);
  const std::size_t a_block = M * K, b_block = K * P, o_block = M * P;

  // per-batch block offsets (0-stride when the operand's batch broadcasts)
  std::vector<std::size_t> a_off(nbatch, 0), b_off(nbatch, 0);
  if (!batch.empty()) {
    const Shape ab = a_batch.empty() ? Shape{1} : a_batch;
    const Shape bb = b_batch.empty() ? Shape{1} : b_batch;
    std::size_t t = 0;
    for_each_bcast(batch, ab, bb,
                   [&](std::size_t, std::size_t pa, std::size_t pb) {
                     a_off[t] = pa * a_block;
                     b_off[t] = pb * b_block;
                     ++t;
                   });
  }

  const bool a_real = a.real_typed();
  const bool b_real = b.real_typed();
  for (std::size_t t = 0; t < nbatch; ++t) {
    const double* Ar = a.re().data() + a_off[t];
    const double* Ai = a.im().data() + a_off[t];
    const double* Br = b.re().data() + b_off[t];
    const double* Bi = b.im().data() + b_off[t];
    double* Cr = n->re.data() + t * o_block;
    double* Ci = n->im.data() + t * o_block;
    gemm_nn(M, K, P, Ar, Br, Cr, 1.0);
    if (!a_real && !b_real) gemm_nn(M, K, P, Ai, Bi, Cr, -1.0);
    if (!b_real) gemm_nn(M, K, P, Ar, Bi, Ci, 1.0);
    if (!a_real) gemm_nn(M, K, P, Ai, Br, Ci, 1.0);
  }

  auto pa = a.handle();
  auto pb = b.handle();
  n->backward_fn = [pa, pb, M, K, P, nbatch, a_off, b_off, a_block, b_block,
                    o_block, a_real, b_real](Tensor::Node& self) {
    const bool has_gr = !self.tg_re.empty();
    const bool has_gi = !self.tg_im.empty();
    if (!has_gr && !has_gi) return;
    auto& are_g = pa->tg_re_buf();
    auto& aim_g = pa->tg_im_buf();
    auto& bre_g = pb->tg_re_buf();
    auto& bim_g = pb->tg_im_buf();
    for (std::size_t t = 0; t < nbatch; ++t) {
      const double* Gr = has_gr ? self.tg_re.data() + t * o_block : nullptr;
      const double* Gi = has_gi ? self.tg_im.data() + t * o_block : nullptr;
      const double* Ar = pa->re.data() + a_off[t];
      const double* Ai = pa->im.data() + a_off[t];
      const double* Br = pb->re.data() + b_off[t];
      const double* Bi = pb->im.data() + b_off[t];
      double* dAr = are_g.data() + a_off[t];
      double* dAi = aim_g.data() + a_off[t];
      double* dBr = bre_g.data() + b_off[t];
      double* dBi = bim_g.data() + b_off[t];
      // grad_A = G * B^H ; grad_B = A^H * G (split into real GEMMs)
      if (Gr) {
        gemm_nt(M, P, K, Gr, Br, dAr, 1.0);
        if (!b_real) gemm_nt(M, P, K, Gr, Bi, dAi, -1.0);
        gemm_tn(M, K, P, Ar, Gr, dBr, 1.0);
        if (!a_real) gemm_tn(M, K, P, Ai, Gr, dBi, -1.0);
      }
      if (Gi) {
        if (!b_real) gemm_nt(M, P, K, Gi, Bi, dAr, 1.0);
        gemm_nt(M, P, K, Gi, Br, dAi, 1.0);
        if (!a_real) gemm_tn(M, K, P, Ai, Gi, dBr, 1.0);
        gemm_tn(M, K, P, Ar, Gi, dBi, 1.0);
      }
    }
  };
  return Tensor::wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape new_shape) {
  tensor_detail::check_shape(new_shape);
  if (tensor_detail::numel(new_shape) != a.numel())
    throw dimension_error("reshape: element count mismatch");
  auto n = tensor_detail::make_result(std::move(new_shape), a.real_typed(),
                                      {a.handle()});
  n->re = a.re();
  n->im = a.im();
  auto pa = a.handle();
  n->backward_fn = [pa](Tensor::Node& self) {
    if (!self.tg_re.empty()) {
      auto& d = pa->tg_re_buf();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.tg_re[i];
    }
    if (!self.tg_im.empty()) {
      auto& d = pa->tg_im_buf();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.tg_im[i];
    }
  };
  return Tensor::wrap(std::move(n));
}

inline Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank()) throw dimension_error("concat: rank mismatch");
  if (axis >= a.rank()) throw dimension_error("concat: axis out of range");
  for (std::size_t d = 0; d < a.rank(); ++d)
    if (d != axis && a.shape()[d] != b.shape()[d])
      throw dimension_error("concat: non-axis extents differ");

  Shape out_shape = a.shape();
  out_shape[axis] += b.shape()[axis];
  auto n = tensor_detail::make_result(
      out_shape, a.real_typed() && b.real_typed(), {a.handle(), b.handle()});

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::size_t d = axis + 1; d < out_shape.size(); ++d)
    inner *= out_shape[d];
  const std::size_t la = a.shape()[axis] * inner;
  const std::size_t lb = b.shape()[axis] * inner;

  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.re().data() + o * la, la, n->re.data() + o * (la + lb));
    std::copy_n(a.im().data() + o * la, la, n->im.data() + o * (la + lb));
    std::copy_n(b.re().data() + o * lb, lb, n->re.data() + o * (la + lb) + la);
    std::copy_n(b.im().data() + o * lb, lb, n->im.data() + o * (la + lb) + la);
  }

  auto pa = a.handle();
  auto pb = b.handle();
  n->backward_fn = [pa, pb, outer, la, lb](Tensor::Node& self) {
    auto scatter = [&](const std::vector<double>& g, bool to_im) {
      if (g.empty()) return;
      auto& da = to_im ? pa->tg_im_buf() : pa->tg_re_buf();
      auto& db = to_im ? pb->tg_im_buf() : pb->tg_re_buf();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = g.data() + o * (la + lb);
        for (std::size_t i = 0; i < la; ++i) da[o * la + i] += src[i];
        for (std::size_t i = 0; i < lb; ++i) db[o * lb + i] += src[la + i];
      }
    };
    scatter(self.tg_re, false);
    scatter(self.tg_im, true);
  };
  return Tensor::wrap(std::move(n));
}

inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
                    std::size_t len) {
  if (axis >= a.rank()) throw dimension_error("slice: axis out of range");
  if (start + len > a.shape()[axis] || len == 0)
    throw dimension_error("slice: range out of bounds");
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  auto n =
      tensor_detail::make_result(out_shape, a.real_typed(), {a.handle()});

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.shape()[d];
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.shape()[d];
  const std::size_t src_stride = a.shape()[axis] * inner;
  const std::size_t dst_stride = len * inner;

  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.re().data() + o * src_stride + start * inner, dst_stride,
                n->re.data() + o * dst_stride);
    std::copy_n(a.im().data() + o * src_stride + start * inner, dst_stride,
                n->im.data() + o * dst_stride);
  }

  auto pa = a.handle();
  n->backward_fn = [pa, outer, inner, start, src_stride,
                    dst_stride](Tensor::Node& self) {
    auto scatter = [&](const std::vector<double>& g, bool to_im) {
      if (g.empty()) return;
      auto& d = to_im ? pa->tg_im_buf() : pa->tg_re_buf();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < dst_stride; ++i)
          d[o * src_stride + start * inner + i] += g[o * dst_stride + i];
    };
    scatter(self.tg_re, false);
    scatter(self.tg_im, true);
  };
  return Tensor::wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor reduce_sum(const Tensor& a, std::size_t axis, bool keepdim) {
  if (axis >= a.rank()) throw dimension_error("reduce_sum: axis out of range");
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
  }
  auto n =
      tensor_detail::make_result(out_shape, a.real_typed(), {a.handle()});

  std::size_t outer = 1, inner = 1;
  const std::size_t mid = a.shape()[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= a.shape()[d];
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.shape()[d];

  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t m = 0; m < mid; ++m)
      for (std::size_t i = 0; i < inner; ++i) {
        n->re[o * inner + i] += a.re()[(o * mid + m) * inner + i];
        n->im[o * inner + i] += a.im()[(o * mid + m) * inner + i];
      }

  auto pa = a.handle();
  n->backward_fn = [pa, outer, mid, inner](Tensor::Node& self) {
    auto scatter = [&](const std::vector<double>& g, bool to_im) {
      if (g.empty()) return;
      auto& d = to_im ? pa->tg_im_buf() : pa->tg_re_buf();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t m = 0; m < mid; ++m)
          for (std::size_t i = 0; i < inner; ++i)
            d[(o * mid + m) * inner + i] += g[o * inner + i];
    };
    scatter(self.tg_re, false);
    scatter(self.tg_im, true);
  };
  return Tensor::wrap(std::move(n));
}

inline Tensor reduce_sum_all(const Tensor& a) {
  auto n = tensor_detail::make_result({1}, a.real_typed(), {a.handle()});
  double sr = 0.0, si = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    sr += a.re()[i];
    si += a.im()[i];
  }
  n->re[0] = sr;
  n->im[0] = si;
  auto pa = a.handle();
  n->backward_fn = [pa](Tensor::Node& self) {
    if (!self.tg_re.empty()) {
      auto& d = pa->tg_re_buf();
      for (auto& v : d) v += self.tg_re[0];
    }
    if (!self.tg_im.empty()) {
      auto& d = pa->tg_im_buf();
      for (auto& v : d) v += self.tg_im[0];
    }
  };
  return Tensor::wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// nonlinear / part ops
// ---------------------------------------------------------------------------

inline Tensor exp(const Tensor& a) {
  if (!a.real_typed()) throw contract_error("exp: input must be real-typed");
  auto n = tensor_detail::make_result(a.shape(), true, {a.handle()});
  for (std::size_t i = 0; i < a.numel(); ++i) n->re[i] = std::exp(a.re()[i]);
  auto pa = a.handle();
  n->backward_fn = [pa](Tensor::Node& self) {
    if (self.tg_re.empty()) return;
    auto& d = pa->tg_re_buf();
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] += self.tg_re[i] * self.re[i];
  };
  return Tensor::wrap(std::move(n));
}

inline Tensor sqrt(const Tensor& a) {
  if (!a.real_typed()) throw contract_error("sqrt: input must be real-typed");
  auto n = tensor_detail::make_result(a.shape(), true, {a.handle()});
  for (std::size_t i = 0; i < a.numel(); ++i) n->re[i] = std::sqrt(a.re()[i]);
  auto pa = a.handle();
  n->backward_fn = [pa](Tensor::Node& self) {
    if (self.tg_re.empty()) return;
    auto& d = pa->tg_re_buf();
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] += self.tg_re[i] * 0.5 / self.re[i];
  };
  return Tensor::wrap(std::move(n));
}

/// Elementwise modulus |z|; real-typed output. The subgradient at z = 0 is
/// taken as 0 for both parts.
inline Tensor magnitude(const Tensor& a) {
  auto n = tensor_detail::make_result(a.shape(), true, {a.handle()});
  for (std::size_t i = 0; i < a.numel(); ++i)
    n->re[i] = std::hypot(a.re()[i], a.im()[i]);
  auto pa = a.handle();
  n->backward_fn = [pa](Tensor::Node& self) {
    if (self.tg_re.empty()) return;
    auto& dre = pa->tg_re_buf();
    auto& dim = pa->tg_im_buf();
    for (std::size_t i = 0; i < dre.size(); ++i) {
      const double m = self.re[i];
      if (m > 0.0) {
        dre[i] += self.tg_re[i] * pa->re[i] / m;
        dim[i] += self.tg_re[i] * pa->im[i] / m;
      }
    }
  };
  return Tensor::wrap(std::move(n));
}

/// 1/x where x > 0, otherwise 0. Real-typed. Gradient is 0 on the zero
/// branch, which is what the phase-factor convention in csoftmax needs.
inline Tensor safe_reciprocal(const Tensor& a) {
  if (!a.real_typed())
    throw contract_error("safe_reciprocal: input must be real-typed");
  auto n = tensor_detail::make_result(a.shape(), true, {a.handle()});
  for (std::size_t i = 0; i < a.numel(); ++i)
    n->re[i] = a.re()[i] > 0.0 ? 1.0 / a.re()[i] : 0.0;
  auto pa = a.handle();
  n->backward_fn = [pa](Tensor::Node& self) {
    if (self.tg_re.empty()) return;
    auto& d = pa->tg_re_buf();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (pa->re[i] > 0.0)
        d[i] -= self.tg_re[i] * self.re[i] * self.re[i];
    }
  };
  return Tensor::wrap(std::move(n));
}

/// max(0, .) applied to the real and imaginary parts independently.
inline Tensor relu_parts(const Tensor& a) {
  auto n = tensor_detail::make_result(a.shape(), a.real_typed(), {a.handle()});
  for (std::size_t i = 0; i < a.numel(); ++i) {
    n->re[i] = a.re()[i] > 0.0 ? a.re()[i] : 0.0;
    n->im[i] = a.im()[i] > 0.0 ? a.im()[i] : 0.0;
  }
  auto pa = a.handle();
  n->backward_fn = [pa](Tensor::Node& self) {
    if (!self.tg_re.empty()) {
      auto& d = pa->tg_re_buf();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (pa->re[i] > 0.0) d[i] += self.tg_re[i];
    }
    if (!self.tg_im.empty()) {
      auto& d = pa->tg_im_buf();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (pa->im[i] > 0.0) d[i] += self.tg_im[i];
    }
  };
  return Tensor::wrap(std::move(n));
}

inline Tensor real_part(const Tensor& a) {
  auto n = tensor_detail::make_result(a.shape(), true, {a.handle()});
  n->re = a.re();
  auto pa = a.handle();
  n->backward_fn = [pa](Tensor::Node& self) {
    if (self.tg_re.empty()) return;
    auto& d = pa->tg_re_buf();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.tg_re[i];
  };
  return Tensor::wrap(std::move(n));
}

inline Tensor imag_part(const Tensor& a) {
  auto n = tensor_detail::make_result(a.shape(), true, {a.handle()});
  n->re = a.im();
  auto pa = a.handle();
  n->backward_fn = [pa](Tensor::Node& self) {
    if (self.tg_re.empty()) return;
    auto& d = pa->tg_im_buf();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.tg_re[i];
  };
  return Tensor::wrap(std::move(n));
}

/// re + i*im from two real-typed tensors of equal shape.
inline Tensor make_complex(const Tensor& re_t, const Tensor& im_t) {
  if (!re_t.real_typed() || !im_t.real_typed())
    throw contract_error("make_complex: parts must be real-typed");
  if (re_t.shape() != im_t.shape())
    throw dimension_error("make_complex: part shapes differ");
  auto n = tensor_detail::make_result(re_t.shape(), false,
                                      {re_t.handle(), im_t.handle()});
  n->re = re_t.re();
  n->im = im_t.re();
  n->real_typed = std::all_of(n->im.begin(), n->im.end(),
                              [](double v) { return v == 0.0; });
  auto pr = re_t.handle();
  auto pi = im_t.handle();
  n->backward_fn = [pr, pi](Tensor::Node& self) {
    if (!self.tg_re.empty()) {
      auto& d = pr->tg_re_buf();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.tg_re[i];
    }
    if (!self.tg_im.empty()) {
      auto& d = pi->tg_re_buf();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.tg_im[i];
    }
  };
  return Tensor::wrap(std::move(n));
}

inline Tensor conj(const Tensor& a) {
  auto n = tensor_detail::make_result(a.shape(), a.real_typed(), {a.handle()});
  n->re = a.re();
  for (std::size_t i = 0; i < a.numel(); ++i) n->im[i] = -a.im()[i];
  auto pa = a.handle();
  n->backward_fn = [pa](Tensor::Node& self) {
    if (!self.tg_re.empty()) {
      auto& d = pa->tg_re_buf();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.tg_re[i];
    }
    if (!self.tg_im.empty()) {
      auto& d = pa->tg_im_buf();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= self.tg_im[i];
    }
  };
  return Tensor::wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

/// Reverse-mode sweep from a real scalar loss. Visits each node exactly once
/// in reverse topological order, accumulates gradients at shared nodes, and
/// deposits d(loss)/d(leaf) into the grad slots of trainable leaves.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw contract_error("backward: loss must be a scalar");
  if (!loss.real_typed())
    throw contract_error("backward: loss must be real-typed");

  // iterative post-order DFS
  std::vector<Tensor::Node*> order;
  std::unordered_set<Tensor::Node*> seen;
  std::vector<std::pair<Tensor::Node*, std::size_t>> stack;
  stack.emplace_back(&const_cast<Tensor&>(loss).node(), 0);
  seen.insert(stack.back().first);
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Tensor::Node* child = node->parents[next_child++].get();
      if (seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // seed and sweep (order is post-order, so walk it backwards)
  auto* loss_node = &const_cast<Tensor&>(loss).node();
  loss_node->tg_re.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor::Node* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
    if (node->trainable) {
      if (!node->tg_re.empty())
        for (std::size_t i = 0; i < node->grad_re.size(); ++i)
          node->grad_re[i] += node->tg_re[i];
      if (!node->tg_im.empty())
        for (std::size_t i = 0; i < node->grad_im.size(); ++i)
          node->grad_im[i] += node->tg_im[i];
    }
  }
  for (Tensor::Node* node : order) {
    node->tg_re = std::vector<double>();
    node->tg_im = std::vector<double>();
  }
}

}  // namespace filterts
