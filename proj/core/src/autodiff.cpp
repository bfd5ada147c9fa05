#include "dynaware/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <unordered_map>

namespace dynaware::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != numel(shape)) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " needs " + std::to_string(numel(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
}

// ---------------------------------------------------------------- tape

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn backward) {
  if (check_finite_) {
    for (T v : value.data) {
      if (!std::isfinite(v)) throw NonFiniteError("operation produced a non-finite value (node " + std::to_string(nodes_.size()) + ")");
    }
  }
  Node node;
  node.value = std::move(value);
  for (std::size_t p : parents) node.requires_grad = node.requires_grad || nodes_.at(p).requires_grad;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  return record(std::move(value), {}, nullptr);
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  Var<T> v = record(std::move(value), {}, nullptr);
  nodes_.back().requires_grad = true;
  return v;
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& parameter) {
  Var<T> v = record(parameter.value, {}, nullptr);
  nodes_.back().requires_grad = true;
  nodes_.back().parameter = &parameter;
  return v;
}

template <typename T>
Var<T> Tape<T>::detach(Var<T> v) {
  return constant(v.value());
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value.shape);
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
const Tensor<T>* Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_.at(v.id());
  return n.has_grad ? &n.grad : nullptr;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss lives on another tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  if (backward_done_) throw std::logic_error("backward: tape already consumed");
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id()).data[0] = T{1};
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.has_grad) continue;
    if (check_finite_) {
      for (T g : n.grad.data) {
        if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient at node " + std::to_string(id));
      }
    }
    if (n.backward) n.backward(*this, id);
    if (n.parameter) {
      auto& pg = n.parameter->grad.data;
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad.data[i];
    }
  }
}

// ---------------------------------------------------------------- helpers

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const Mat<T>>;

template <typename T>
MapMat<T> as_mat(T* p, std::size_t r, std::size_t c) {
  return MapMat<T>(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
template <typename T>
CMapMat<T> as_mat(const T* p, std::size_t r, std::size_t c) {
  return CMapMat<T>(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

template <typename T>
Tape<T>& tape_of(Var<T> a) {
  if (!a.valid()) throw std::invalid_argument("operation on an empty Var");
  return *a.tape();
}

template <typename T>
Tape<T>& tape_of(Var<T> a, Var<T> b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
  return *a.tape();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename T>
void require_rank(Var<T> v, std::size_t r, const char* op) {
  require(v.shape().size() == r, std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_string(v.shape()));
}

template <typename T>
void accumulate(Tape<T>& t, std::size_t id, const Tensor<T>& g) {
  if (!t.requires_grad(id)) return;
  auto& dst = t.grad_buffer(id).data;
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g.data[i];
}

// Reductions accumulate in double.
template <typename T>
double sum_range(const T* p, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(p[i]);
  return s;
}

template <typename T>
double dot_range(const T* a, const T* b, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

struct ConvGeometry {
  std::size_t n, c, h, w, co, k, ho, wo, stride, pad;
  std::size_t kc() const { return c * k * k; }
  std::size_t p() const { return ho * wo; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = col + ((c * g.k + ki) * g.k + kj) * P;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          T* out = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<long>(g.h)) {
            std::fill(out, out + g.wo, T{0});
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            out[ow] = (iw < 0 || iw >= static_cast<long>(g.w)) ? T{0} : src[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = col + ((c * g.k + ki) * g.k + kj) * P;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            if (iw >= 0 && iw < static_cast<long>(g.w)) dst[iw] += row[oh * g.wo + ow];
          }
        }
      }
    }
  }
}

// Samples are processed in this many fixed chunks so that parameter-gradient
// partial sums are combined in the same order whatever the thread count.
constexpr std::size_t kReduceChunks = 16;

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& t = tape_of(a, b);
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& tp, std::size_t self) {
    accumulate(tp, ia, tp.grad_of(self));
    accumulate(tp, ib, tp.grad_of(self));
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T c) {
  Tape<T>& t = tape_of(a);
  Tensor<T> out = a.value();
  for (T& v : out.data) v += c;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](Tape<T>& tp, std::size_t self) { accumulate(tp, ia, tp.grad_of(self)); });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
  Tape<T>& t = tape_of(a);
  Tensor<T> out = a.value();
  for (T& v : out.data) v *= c;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia, c](Tape<T>& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    auto& ga = tp.grad_buffer(ia).data;
    const auto& g = tp.grad_of(self).data;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * g[i];
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& t = tape_of(a, b);
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad_of(self).data;
    if (tp.requires_grad(ia)) {
      auto& ga = tp.grad_buffer(ia).data;
      const auto& bv = tp.value(ib).data;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(ib)) {
      auto& gb = tp.grad_buffer(ib).data;
      const auto& av = tp.value(ia).data;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tape<T>& t = tape_of(a);
  Tensor<T> out = a.value();
  for (T& v : out.data) v = v > T{0} ? v : T{0};
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](Tape<T>& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    auto& ga = tp.grad_buffer(ia).data;
    const auto& g = tp.grad_of(self).data;
    const auto& x = tp.value(ia).data;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += x[i] > T{0} ? g[i] : T{0};
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tape<T>& t = tape_of(a);
  require(numel(shape) == a.value().size(),
          "reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  Tensor<T> out(std::move(shape), a.value().data);
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](Tape<T>& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    auto& ga = tp.grad_buffer(ia).data;
    const auto& g = tp.grad_of(self).data;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

// ---------------------------------------------------------------- linear algebra

template <typename T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
  Tape<T>& t = tape_of(x, w);
  tape_of(x, b);
  require_rank(x, 2, "affine(x)");
  require_rank(w, 2, "affine(w)");
  require_rank(b, 1, "affine(b)");
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  require(w.dim(1) == in && b.dim(0) == out_dim, "affine: x " + shape_string(x.shape()) + ", w " +
                                                     shape_string(w.shape()) + ", b " + shape_string(b.shape()));
  Tensor<T> out({n, out_dim});
  auto Y = as_mat(out.ptr(), n, out_dim);
  Y.noalias() = as_mat(x.value().ptr(), n, in) * as_mat(w.value().ptr(), out_dim, in).transpose();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < out_dim; ++o) out[r * out_dim + o] += b.value()[o];
  }
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return t.record(std::move(out), {ix, iw, ib}, [ix, iw, ib, n, in, out_dim](Tape<T>& tp, std::size_t self) {
    const auto G = as_mat(tp.grad_of(self).ptr(), n, out_dim);
    if (tp.requires_grad(ix)) {
      as_mat(tp.grad_buffer(ix).ptr(), n, in).noalias() += G * as_mat(tp.value(iw).ptr(), out_dim, in);
    }
    if (tp.requires_grad(iw)) {
      as_mat(tp.grad_buffer(iw).ptr(), out_dim, in).noalias() += G.transpose() * as_mat(tp.value(ix).ptr(), n, in);
    }
    if (tp.requires_grad(ib)) {
      auto& gb = tp.grad_buffer(ib).data;
      const T* g = tp.grad_of(self).ptr();
      for (std::size_t o = 0; o < out_dim; ++o) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += g[r * out_dim + o];
        gb[o] += static_cast<T>(s);
      }
    }
  });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  Tape<T>& t = tape_of(a, b);
  require_rank(a, 2, "matmul_nt(a)");
  require_rank(b, 2, "matmul_nt(b)");
  const std::size_t n = a.dim(0), d = a.dim(1), m = b.dim(0);
  require(b.dim(1) == d, "matmul_nt: inner dimensions differ: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor<T> out({n, m});
  as_mat(out.ptr(), n, m).noalias() = as_mat(a.value().ptr(), n, d) * as_mat(b.value().ptr(), m, d).transpose();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib, n, d, m](Tape<T>& tp, std::size_t self) {
    const auto G = as_mat(tp.grad_of(self).ptr(), n, m);
    if (tp.requires_grad(ia)) as_mat(tp.grad_buffer(ia).ptr(), n, d).noalias() += G * as_mat(tp.value(ib).ptr(), m, d);
    if (tp.requires_grad(ib)) {
      as_mat(tp.grad_buffer(ib).ptr(), m, d).noalias() += G.transpose() * as_mat(tp.value(ia).ptr(), n, d);
    }
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, Conv2dSpec spec) {
  Tape<T>& t = tape_of(x, w);
  tape_of(x, b);
  require_rank(x, 4, "conv2d(x)");
  require_rank(w, 4, "conv2d(w)");
  require_rank(b, 1, "conv2d(b)");
  require(spec.stride >= 1, "conv2d: stride must be >= 1");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.co = w.dim(0);
  g.k = w.dim(2);
  g.stride = spec.stride;
  g.pad = spec.padding;
  require(w.dim(1) == g.c && w.dim(3) == g.k && b.dim(0) == g.co,
          "conv2d: x " + shape_string(x.shape()) + ", w " + shape_string(w.shape()) + ", b " + shape_string(b.shape()));
  require(g.h + 2 * g.pad >= g.k && g.w + 2 * g.pad >= g.k, "conv2d: kernel larger than padded input");
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;

  const std::size_t in_sz = g.c * g.h * g.w, out_sz = g.co * g.p();
  Tensor<T> out({g.n, g.co, g.ho, g.wo});
  const T* xv = x.value().ptr();
  const T* wv = w.value().ptr();
  const T* bv = b.value().ptr();
  T* ov = out.ptr();
#pragma omp parallel
  {
    std::vector<T> col(g.kc() * g.p());
#pragma omp for schedule(static)
    for (std::size_t s = 0; s < g.n; ++s) {
      im2col(xv + s * in_sz, g, col.data());
      auto O = as_mat(ov + s * out_sz, g.co, g.p());
      O.noalias() = as_mat(wv, g.co, g.kc()) * as_mat(static_cast<const T*>(col.data()), g.kc(), g.p());
      for (std::size_t c = 0; c < g.co; ++c) O.row(static_cast<Eigen::Index>(c)).array() += bv[c];
    }
  }

  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return t.record(std::move(out), {ix, iw, ib}, [ix, iw, ib, g, in_sz, out_sz](Tape<T>& tp, std::size_t self) {
    const bool need_x = tp.requires_grad(ix), need_w = tp.requires_grad(iw), need_b = tp.requires_grad(ib);
    const T* gv = tp.grad_of(self).ptr();
    const T* xv = tp.value(ix).ptr();
    const T* wv = tp.value(iw).ptr();
    T* gx = need_x ? tp.grad_buffer(ix).ptr() : nullptr;
    const std::size_t chunks = std::min(kReduceChunks, g.n);
    std::vector<Tensor<T>> part_w(need_w ? chunks : 0, Tensor<T>({g.co, g.kc()}));
    std::vector<std::vector<double>> part_b(need_b ? chunks : 0, std::vector<double>(g.co, 0.0));
#pragma omp parallel
    {
      std::vector<T> col(g.kc() * g.p());
      std::vector<T> dcol(need_x ? g.kc() * g.p() : 0);
#pragma omp for schedule(static)
      for (std::size_t ch = 0; ch < chunks; ++ch) {
        const std::size_t lo = g.n * ch / chunks, hi = g.n * (ch + 1) / chunks;
        for (std::size_t s = lo; s < hi; ++s) {
          const auto G = as_mat(gv + s * out_sz, g.co, g.p());
          if (need_w) {
            im2col(xv + s * in_sz, g, col.data());
            as_mat(part_w[ch].ptr(), g.co, g.kc()).noalias() +=
                G * as_mat(static_cast<const T*>(col.data()), g.kc(), g.p()).transpose();
          }
          if (need_b) {
            for (std::size_t c = 0; c < g.co; ++c) part_b[ch][c] += sum_range(gv + s * out_sz + c * g.p(), g.p());
          }
          if (need_x) {
            as_mat(dcol.data(), g.kc(), g.p()).noalias() = as_mat(wv, g.co, g.kc()).transpose() * G;
            col2im_add(dcol.data(), g, gx + s * in_sz);
          }
        }
      }
    }
    if (need_w) {
      auto& gw = tp.grad_buffer(iw).data;
      for (const auto& pw : part_w) {
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += pw.data[i];
      }
    }
    if (need_b) {
      auto& gb = tp.grad_buffer(ib).data;
      for (std::size_t c = 0; c < g.co; ++c) {
        double s = 0.0;
        for (const auto& pb : part_b) s += pb[c];
        gb[c] += static_cast<T>(s);
      }
    }
  });
}

template <typename T>
Var<T> mean_pool(Var<T> x) {
  Tape<T>& t = tape_of(x);
  require_rank(x, 4, "mean_pool");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({n, c});
  const T* xv = x.value().ptr();
  for (std::size_t i = 0; i < n * c; ++i) out[i] = static_cast<T>(sum_range(xv + i * hw, hw) / static_cast<double>(hw));
  const std::size_t ix = x.id();
  return t.record(std::move(out), {ix}, [ix, n, c, hw](Tape<T>& tp, std::size_t self) {
    if (!tp.requires_grad(ix)) return;
    T* gx = tp.grad_buffer(ix).ptr();
    const T* g = tp.grad_of(self).ptr();
    const T inv = T{1} / static_cast<T>(hw);
    for (std::size_t i = 0; i < n * c; ++i) {
      const T v = g[i] * inv;
      for (std::size_t k = 0; k < hw; ++k) gx[i * hw + k] += v;
    }
  });
}

template <typename T>
Var<T> film(Var<T> h, Var<T> gamma, Var<T> shift) {
  Tape<T>& t = tape_of(h, gamma);
  tape_of(h, shift);
  require_rank(h, 4, "film(h)");
  const std::size_t n = h.dim(0), c = h.dim(1), hw = h.dim(2) * h.dim(3);
  require(gamma.shape() == Shape{n, c} && shift.shape() == Shape{n, c},
          "film: h " + shape_string(h.shape()) + " needs gamma/shift [" + std::to_string(n) + ", " + std::to_string(c) + "]");
  Tensor<T> out = h.value();
  for (std::size_t i = 0; i < n * c; ++i) {
    const T gm = gamma.value()[i], sh = shift.value()[i];
    T* o = out.ptr() + i * hw;
    for (std::size_t k = 0; k < hw; ++k) o[k] = gm * o[k] + sh;
  }
  const std::size_t ih = h.id(), ig = gamma.id(), is = shift.id();
  return t.record(std::move(out), {ih, ig, is}, [ih, ig, is, n, c, hw](Tape<T>& tp, std::size_t self) {
    const T* g = tp.grad_of(self).ptr();
    const T* hv = tp.value(ih).ptr();
    if (tp.requires_grad(ih)) {
      T* gh = tp.grad_buffer(ih).ptr();
      const T* gm = tp.value(ig).ptr();
      for (std::size_t i = 0; i < n * c; ++i) {
        for (std::size_t k = 0; k < hw; ++k) gh[i * hw + k] += gm[i] * g[i * hw + k];
      }
    }
    if (tp.requires_grad(ig)) {
      T* gg = tp.grad_buffer(ig).ptr();
      for (std::size_t i = 0; i < n * c; ++i) gg[i] += static_cast<T>(dot_range(g + i * hw, hv + i * hw, hw));
    }
    if (tp.requires_grad(is)) {
      T* gs = tp.grad_buffer(is).ptr();
      for (std::size_t i = 0; i < n * c; ++i) gs[i] += static_cast<T>(sum_range(g + i * hw, hw));
    }
  });
}

template <typename T>
Var<T> concat(Var<T> a, Var<T> b) {
  Tape<T>& t = tape_of(a, b);
  require_rank(a, 2, "concat(a)");
  require_rank(b, 2, "concat(b)");
  const std::size_t n = a.dim(0), p = a.dim(1), q = b.dim(1);
  require(b.dim(0) == n, "concat: row counts differ");
  Tensor<T> out({n, p + q});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.value().ptr() + r * p, p, out.ptr() + r * (p + q));
    std::copy_n(b.value().ptr() + r * q, q, out.ptr() + r * (p + q) + p);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib, n, p, q](Tape<T>& tp, std::size_t self) {
    const T* g = tp.grad_of(self).ptr();
    if (tp.requires_grad(ia)) {
      T* ga = tp.grad_buffer(ia).ptr();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < p; ++j) ga[r * p + j] += g[r * (p + q) + j];
    }
    if (tp.requires_grad(ib)) {
      T* gb = tp.grad_buffer(ib).ptr();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < q; ++j) gb[r * q + j] += g[r * (p + q) + p + j];
    }
  });
}

template <typename T>
Var<T> columns(Var<T> a, std::size_t lo, std::size_t hi) {
  Tape<T>& t = tape_of(a);
  require_rank(a, 2, "columns");
  const std::size_t n = a.dim(0), d = a.dim(1);
  require(lo < hi && hi <= d, "columns: range [" + std::to_string(lo) + ", " + std::to_string(hi) + ") out of " + std::to_string(d));
  const std::size_t m = hi - lo;
  Tensor<T> out({n, m});
  for (std::size_t r = 0; r < n; ++r) std::copy_n(a.value().ptr() + r * d + lo, m, out.ptr() + r * m);
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia, n, d, lo, m](Tape<T>& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    T* ga = tp.grad_buffer(ia).ptr();
    const T* g = tp.grad_of(self).ptr();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < m; ++j) ga[r * d + lo + j] += g[r * m + j];
  });
}

template <typename T>
Var<T> rows(Var<T> a, std::span<const std::size_t> index) {
  Tape<T>& t = tape_of(a);
  require(a.shape().size() >= 1, "rows: scalar input");
  const std::size_t n = a.dim(0);
  const std::size_t row = n == 0 ? 0 : a.value().size() / n;
  Shape shape = a.shape();
  shape[0] = index.size();
  Tensor<T> out(shape);
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] < n, "rows: index " + std::to_string(index[r]) + " out of range " + std::to_string(n));
    std::copy_n(a.value().ptr() + index[r] * row, row, out.ptr() + r * row);
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return t.record(std::move(out), {ia}, [ia, row, idx = std::move(idx)](Tape<T>& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    T* ga = tp.grad_buffer(ia).ptr();
    const T* g = tp.grad_of(self).ptr();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      T* dst = ga + idx[r] * row;
      const T* src = g + r * row;
      for (std::size_t k = 0; k < row; ++k) dst[k] += src[k];
    }
  });
}

template <typename T>
Var<T> outer(Var<T> a, Var<T> b) {
  Tape<T>& t = tape_of(a, b);
  require_rank(a, 2, "outer(a)");
  require_rank(b, 2, "outer(b)");
  const std::size_t n = a.dim(0), p = a.dim(1), q = b.dim(1);
  require(b.dim(0) == n, "outer: row counts differ");
  Tensor<T> out({n, p * q});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < q; ++j) out[(r * p + i) * q + j] = a.value()[r * p + i] * b.value()[r * q + j];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib, n, p, q](Tape<T>& tp, std::size_t self) {
    const T* g = tp.grad_of(self).ptr();
    const T* av = tp.value(ia).ptr();
    const T* bv = tp.value(ib).ptr();
    if (tp.requires_grad(ia)) {
      T* ga = tp.grad_buffer(ia).ptr();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < p; ++i) ga[r * p + i] += static_cast<T>(dot_range(g + (r * p + i) * q, bv + r * q, q));
    }
    if (tp.requires_grad(ib)) {
      T* gb = tp.grad_buffer(ib).ptr();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t j = 0; j < q; ++j) gb[r * q + j] += g[(r * p + i) * q + j] * av[r * p + i];
    }
  });
}

template <typename T>
Var<T> bilinear(Var<T> x, Var<T> y, Var<T> w, Var<T> bias, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  Tape<T>& t = tape_of(x, y);
  tape_of(x, w);
  tape_of(x, bias);
  require_rank(x, 2, "bilinear(x)");
  require_rank(y, 2, "bilinear(y)");
  require_rank(w, 2, "bilinear(w)");
  require_rank(bias, 1, "bilinear(bias)");
  const std::size_t nx = x.dim(0), p = x.dim(1), ny = y.dim(0), q = y.dim(1), K = w.dim(0);
  require(w.dim(1) == p * q && bias.dim(0) == K, "bilinear: w " + shape_string(w.shape()) + " incompatible with x " +
                                                    shape_string(x.shape()) + ", y " + shape_string(y.shape()));
  // Q[u] = W_k y_u for every distinct right-hand row u, laid out [U, K*p].
  auto slot = std::make_shared<std::vector<std::size_t>>(pairs.size());
  auto used = std::make_shared<std::vector<std::size_t>>();
  {
    std::unordered_map<std::size_t, std::size_t> where;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      require(pairs[k].first < nx && pairs[k].second < ny, "bilinear: pair index out of range");
      auto [it, inserted] = where.try_emplace(pairs[k].second, used->size());
      if (inserted) used->push_back(pairs[k].second);
      (*slot)[k] = it->second;
    }
  }
  const std::size_t U = used->size();
  Mat<T> Yu(static_cast<Eigen::Index>(U), static_cast<Eigen::Index>(q));
  for (std::size_t u = 0; u < U; ++u)
    for (std::size_t j = 0; j < q; ++j) Yu(u, j) = y.value()[(*used)[u] * q + j];
  auto Q = std::make_shared<Mat<T>>(Yu * as_mat(w.value().ptr(), K * p, q).transpose());

  Tensor<T> out({pairs.size(), K});
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const T* xa = x.value().ptr() + pairs[k].first * p;
    const T* qu = Q->data() + (*slot)[k] * K * p;
    for (std::size_t c = 0; c < K; ++c) {
      out[k * K + c] = static_cast<T>(dot_range(xa, qu + c * p, p)) + bias.value()[c];
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> pr(pairs.begin(), pairs.end());
  const std::size_t ix = x.id(), iy = y.id(), iw = w.id(), ib = bias.id();
  return t.record(std::move(out), {ix, iy, iw, ib},
                  [ix, iy, iw, ib, p, q, K, pr = std::move(pr), slot, used, Q](Tape<T>& tp, std::size_t self) {
    const T* g = tp.grad_of(self).ptr();
    const std::size_t U = used->size();
    const T* xv = tp.value(ix).ptr();
    if (tp.requires_grad(ib)) {
      T* gb = tp.grad_buffer(ib).ptr();
      for (std::size_t c = 0; c < K; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < pr.size(); ++k) s += g[k * K + c];
        gb[c] += static_cast<T>(s);
      }
    }
    if (tp.requires_grad(ix)) {
      T* gx = tp.grad_buffer(ix).ptr();
      for (std::size_t k = 0; k < pr.size(); ++k) {
        const T* qu = Q->data() + (*slot)[k] * K * p;
        T* dst = gx + pr[k].first * p;
        for (std::size_t c = 0; c < K; ++c) {
          const T gk = g[k * K + c];
          for (std::size_t i = 0; i < p; ++i) dst[i] += gk * qu[c * p + i];
        }
      }
    }
    const bool need_w = tp.requires_grad(iw), need_y = tp.requires_grad(iy);
    if (!need_w && !need_y) return;
    Mat<T> gQ = Mat<T>::Zero(static_cast<Eigen::Index>(U), static_cast<Eigen::Index>(K * p));
    for (std::size_t k = 0; k < pr.size(); ++k) {
      T* dst = gQ.data() + (*slot)[k] * K * p;
      const T* xa = xv + pr[k].first * p;
      for (std::size_t c = 0; c < K; ++c) {
        const T gk = g[k * K + c];
        for (std::size_t i = 0; i < p; ++i) dst[c * p + i] += gk * xa[i];
      }
    }
    if (need_w) {
      Mat<T> Yu(static_cast<Eigen::Index>(U), static_cast<Eigen::Index>(q));
      const T* yv = tp.value(iy).ptr();
      for (std::size_t u = 0; u < U; ++u)
        for (std::size_t j = 0; j < q; ++j) Yu(u, j) = yv[(*used)[u] * q + j];
      as_mat(tp.grad_buffer(iw).ptr(), K * p, q).noalias() += gQ.transpose() * Yu;
    }
    if (need_y) {
      const Mat<T> gYu = gQ * as_mat(tp.value(iw).ptr(), K * p, q);
      T* gy = tp.grad_buffer(iy).ptr();
      for (std::size_t u = 0; u < U; ++u)
        for (std::size_t j = 0; j < q; ++j) gy[(*used)[u] * q + j] += gYu(u, j);
    }
  });
}

// ---------------------------------------------------------------- reductions and losses

template <typename T>
Var<T> sum(Var<T> a) {
  Tape<T>& t = tape_of(a);
  Tensor<T> out({1}, {static_cast<T>(sum_range(a.value().ptr(), a.value().size()))});
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](Tape<T>& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const T g = tp.grad_of(self)[0];
    for (T& v : tp.grad_buffer(ia).data) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  Tape<T>& t = tape_of(a);
  const std::size_t n = a.value().size();
  require(n > 0, "mean: empty tensor");
  Tensor<T> out({1}, {static_cast<T>(sum_range(a.value().ptr(), n) / static_cast<double>(n))});
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia, n](Tape<T>& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const T g = tp.grad_of(self)[0] / static_cast<T>(n);
    for (T& v : tp.grad_buffer(ia).data) v += g;
  });
}

namespace {

// Row-wise softmax of z = beta * s, in double. Returns per-row log-sum-exp.
template <typename T>
std::vector<double> softmax_rows_scaled(const T* s, std::size_t n, std::size_t k, double beta, std::vector<double>& prob) {
  prob.assign(n * k, 0.0);
  std::vector<double> lse(n);
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, beta * static_cast<double>(s[r * k + j]));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      prob[r * k + j] = std::exp(beta * static_cast<double>(s[r * k + j]) - mx);
      z += prob[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) prob[r * k + j] /= z;
    lse[r] = mx + std::log(z);
  }
  return lse;
}

template <typename T>
Var<T> softmax_loss(Var<T> scores, std::vector<std::size_t> target, double beta, const char* op) {
  Tape<T>& t = tape_of(scores);
  require_rank(scores, 2, op);
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  require(n > 0 && k > 0, std::string(op) + ": empty scores");
  require(target.size() == n, std::string(op) + ": one target per row required");
  for (std::size_t r = 0; r < n; ++r) require(target[r] < k, std::string(op) + ": target index out of range");
  auto prob = std::make_shared<std::vector<double>>();
  const auto lse = softmax_rows_scaled(scores.value().ptr(), n, k, beta, *prob);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) total += lse[r] - beta * static_cast<double>(scores.value()[r * k + target[r]]);
  Tensor<T> out({1}, {static_cast<T>(total / static_cast<double>(n))});
  const std::size_t is = scores.id();
  return t.record(std::move(out), {is}, [is, n, k, beta, prob, target = std::move(target)](Tape<T>& tp, std::size_t self) {
    if (!tp.requires_grad(is)) return;
    const double g = static_cast<double>(tp.grad_of(self)[0]) * beta / static_cast<double>(n);
    T* gs = tp.grad_buffer(is).ptr();
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        gs[r * k + j] += static_cast<T>(g * ((*prob)[r * k + j] - (j == target[r] ? 1.0 : 0.0)));
      }
    }
  });
}

}  // namespace

template <typename T>
Var<T> softmax_xent(Var<T> logits, std::span<const int> targets) {
  std::vector<std::size_t> t(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0) throw ShapeError("softmax_xent: negative target class");
    t[i] = static_cast<std::size_t>(targets[i]);
  }
  return softmax_loss(logits, std::move(t), 1.0, "softmax_xent");
}

template <typename T>
Var<T> infonce(Var<T> scores, std::span<const std::size_t> positives, T beta) {
  require(scores.valid() && scores.shape().size() == 2 && scores.dim(1) >= 2, "infonce: need at least two candidates per row");
  return softmax_loss(scores, std::vector<std::size_t>(positives.begin(), positives.end()), static_cast<double>(beta), "infonce");
}

template <typename T>
Var<T> sigmoid_bce(Var<T> logits, std::span<const T> labels) {
  Tape<T>& t = tape_of(logits);
  const std::size_t n = logits.value().size();
  require(logits.shape().size() == 1 || (logits.shape().size() == 2 && logits.dim(1) == 1),
          "sigmoid_bce: logits must be [N] or [N, 1], got " + shape_string(logits.shape()));
  require(labels.size() == n && n > 0, "sigmoid_bce: one label per logit required");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = logits.value()[i], y = labels[i];
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  Tensor<T> out({1}, {static_cast<T>(total / static_cast<double>(n))});
  std::vector<T> lab(labels.begin(), labels.end());
  const std::size_t il = logits.id();
  return t.record(std::move(out), {il}, [il, n, lab = std::move(lab)](Tape<T>& tp, std::size_t self) {
    if (!tp.requires_grad(il)) return;
    const double g = static_cast<double>(tp.grad_of(self)[0]) / static_cast<double>(n);
    T* gl = tp.grad_buffer(il).ptr();
    const T* x = tp.value(il).ptr();
    for (std::size_t i = 0; i < n; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x[i])));
      gl[i] += static_cast<T>(g * (s - static_cast<double>(lab[i])));
    }
  });
}

template <typename T>
Var<T> mse(Var<T> prediction, std::span<const T> target) {
  Tape<T>& t = tape_of(prediction);
  const std::size_t n = prediction.value().size();
  require(target.size() == n && n > 0, "mse: target size must match prediction");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(prediction.value()[i]) - static_cast<double>(target[i]);
    total += d * d;
  }
  Tensor<T> out({1}, {static_cast<T>(total / static_cast<double>(n))});
  std::vector<T> tg(target.begin(), target.end());
  const std::size_t ip = prediction.id();
  return t.record(std::move(out), {ip}, [ip, n, tg = std::move(tg)](Tape<T>& tp, std::size_t self) {
    if (!tp.requires_grad(ip)) return;
    const double g = 2.0 * static_cast<double>(tp.grad_of(self)[0]) / static_cast<double>(n);
    T* gp = tp.grad_buffer(ip).ptr();
    const T* pv = tp.value(ip).ptr();
    for (std::size_t i = 0; i < n; ++i) gp[i] += static_cast<T>(g * (static_cast<double>(pv[i]) - static_cast<double>(tg[i])));
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax_rows: expected a matrix");
  std::vector<double> prob;
  softmax_rows_scaled(logits.ptr(), logits.dim(0), logits.dim(1), 1.0, prob);
  Tensor<T> out(logits.shape);
  for (std::size_t i = 0; i < prob.size(); ++i) out[i] = static_cast<T>(prob[i]);
  return out;
}

template <typename T>
T sigmoid(T x) {
  return static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x))));
}

// ---------------------------------------------------------------- instantiation

#define DYNAWARE_AD_INSTANTIATE(T)                                                                        \
  template struct Tensor<T>;                                                                              \
  template class Tape<T>;                                                                                 \
  template Var<T> add<T>(Var<T>, Var<T>);                                                                 \
  template Var<T> add_scalar<T>(Var<T>, T);                                                               \
  template Var<T> scale<T>(Var<T>, T);                                                                    \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                                 \
  template Var<T> relu<T>(Var<T>);                                                                        \
  template Var<T> reshape<T>(Var<T>, Shape);                                                              \
  template Var<T> affine<T>(Var<T>, Var<T>, Var<T>);                                                      \
  template Var<T> matmul_nt<T>(Var<T>, Var<T>);                                                           \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, Conv2dSpec);                                          \
  template Var<T> mean_pool<T>(Var<T>);                                                                   \
  template Var<T> film<T>(Var<T>, Var<T>, Var<T>);                                                        \
  template Var<T> concat<T>(Var<T>, Var<T>);                                                              \
  template Var<T> columns<T>(Var<T>, std::size_t, std::size_t);                                           \
  template Var<T> rows<T>(Var<T>, std::span<const std::size_t>);                                          \
  template Var<T> outer<T>(Var<T>, Var<T>);                                                               \
  template Var<T> bilinear<T>(Var<T>, Var<T>, Var<T>, Var<T>, std::span<const std::pair<std::size_t, std::size_t>>); \
  template Var<T> sum<T>(Var<T>);                                                                         \
  template Var<T> mean<T>(Var<T>);                                                                        \
  template Var<T> softmax_xent<T>(Var<T>, std::span<const int>);                                          \
  template Var<T> sigmoid_bce<T>(Var<T>, std::span<const T>);                                             \
  template Var<T> mse<T>(Var<T>, std::span<const T>);                                                     \
  template Var<T> infonce<T>(Var<T>, std::span<const std::size_t>, T);                                    \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                                   \
  template T sigmoid<T>(T);

DYNAWARE_AD_INSTANTIATE(float)
DYNAWARE_AD_INSTANTIATE(double)

}  // namespace dynaware::ad
