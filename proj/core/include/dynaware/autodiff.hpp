#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dynaware::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major array.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T{0}); }
};

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t dim(std::size_t i) const { return value().shape.at(i); }
  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

#ifdef NDEBUG
inline constexpr bool kCheckFiniteByDefault = false;
#else
inline constexpr bool kCheckFiniteByDefault = true;
#endif

// Define-by-run record of operations. Nodes are appended in evaluation order,
// which is a topological order; backward() walks it in reverse and visits
// every node at most once.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool check_finite = kCheckFiniteByDefault) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  // A leaf whose gradient can be read back with grad() after backward().
  Var<T> variable(Tensor<T> value);
  // A leaf bound to a parameter; backward() adds into parameter.grad.
  Var<T> param(Parameter<T>& parameter);
  // Same value, no gradient flows through.
  Var<T> detach(Var<T> v);

  void backward(Var<T> loss);

  // nullptr when the node does not require grad or received none.
  const Tensor<T>* grad(Var<T> v) const;

  std::size_t size() const { return nodes_.size(); }
  bool check_finite() const { return check_finite_; }

  // Op plumbing.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn backward);
  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor<T>& grad_of(std::size_t id) const { return nodes_[id].grad; }
  // Zero-initialized on first use.
  Tensor<T>& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Parameter<T>* parameter = nullptr;
  };
  std::deque<Node> nodes_;
  bool check_finite_;
  bool backward_done_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

struct Conv2dSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Differentiable operations. Shapes are given as [dims]; all inputs must
// live on the same tape.

template <typename T> Var<T> add(Var<T> a, Var<T> b);                 // same shape
template <typename T> Var<T> add_scalar(Var<T> a, T c);
template <typename T> Var<T> scale(Var<T> a, T c);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);                 // elementwise, same shape
template <typename T> Var<T> relu(Var<T> a);
template <typename T> Var<T> reshape(Var<T> a, Shape shape);
// x [N, in], w [out, in], b [out] -> [N, out]
template <typename T> Var<T> affine(Var<T> x, Var<T> w, Var<T> b);
// a [N, d], b [M, d] -> [N, M] with entries a_i . b_j
template <typename T> Var<T> matmul_nt(Var<T> a, Var<T> b);
// x [N, C, H, W], w [Co, C, k, k], b [Co] -> [N, Co, Ho, Wo]
template <typename T> Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, Conv2dSpec spec);
// Global average over H, W: [N, C, H, W] -> [N, C]
template <typename T> Var<T> mean_pool(Var<T> x);
// Feature-wise modulation gamma * h + shift; h [N, C, H, W], gamma/shift [N, C]
template <typename T> Var<T> film(Var<T> h, Var<T> gamma, Var<T> shift);
// Column concatenation: [N, p], [N, q] -> [N, p + q]
template <typename T> Var<T> concat(Var<T> a, Var<T> b);
// Row slice of a matrix: [N, D] -> [N, hi - lo] columns [lo, hi)
template <typename T> Var<T> columns(Var<T> a, std::size_t lo, std::size_t hi);
// Gathers along dimension 0 (any rank); indices may repeat.
template <typename T> Var<T> rows(Var<T> a, std::span<const std::size_t> index);
// Row-wise outer product: [N, p], [N, q] -> [N, p * q] (row i, col j at i*q + j)
template <typename T> Var<T> outer(Var<T> a, Var<T> b);
// Bilinear form over index pairs: out[k] = sum_ij w[k, i*q + j] x[a, i] y[b, j] + bias[k]
// x [Nx, p], y [Ny, q], w [K, p*q], bias [K] -> [pairs, K]
template <typename T>
Var<T> bilinear(Var<T> x, Var<T> y, Var<T> w, Var<T> bias, std::span<const std::pair<std::size_t, std::size_t>> pairs);

template <typename T> Var<T> sum(Var<T> a);   // -> [1]
template <typename T> Var<T> mean(Var<T> a);  // -> [1]

// Mean softmax cross-entropy of logits [N, K] against class indices.
template <typename T> Var<T> softmax_xent(Var<T> logits, std::span<const int> targets);
// Mean logistic loss of logits [N] or [N, 1] against labels in {0, 1}.
template <typename T> Var<T> sigmoid_bce(Var<T> logits, std::span<const T> labels);
// Mean squared error against a constant target of the same size.
template <typename T> Var<T> mse(Var<T> prediction, std::span<const T> target);
// Mean over rows of -beta * s[i, p_i] + log sum_j exp(beta * s[i, j]).
template <typename T> Var<T> infonce(Var<T> scores, std::span<const std::size_t> positives, T beta);

// Non-differentiable helpers.
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& logits);
template <typename T> T sigmoid(T x);

}  // namespace dynaware::ad
