#pragma once

// Reverse-mode automatic differentiation over dense row-major arrays.
//
// A Graph is the computation record for one forward pass. Every operation
// appends a node holding its value and a backward rule; nodes are appended in
// creation order, so the record is already topologically sorted and backward()
// walks it once from the loss towards the leaves. The record is rebuilt every
// iteration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ultranerf/error.hpp"

namespace unerf::diff {

using NodeId = std::size_t;

struct Shape {
  std::vector<std::size_t> dims;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> d) : dims(d) {}
  explicit Shape(std::vector<std::size_t> d) : dims(std::move(d)) {}

  std::size_t rank() const { return dims.size(); }
  std::size_t operator[](std::size_t i) const { return dims[i]; }
  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Constant (non-differentiable) 2D kernel, rows along the first tensor axis.
struct Kernel2D {
  std::size_t rows = 1;
  std::size_t cols = 1;
  std::vector<double> weights{1.0};

  double at(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }
  double sum() const;
  static Kernel2D identity() { return {}; }
};

template <class T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Graph<T>* g, NodeId id) : graph_(g), id_(id) {}

  Graph<T>& graph() const { return *graph_; }
  NodeId id() const { return id_; }
  const Shape& shape() const;
  std::span<const T> values() const;
  std::size_t numel() const { return shape().numel(); }
  T item() const;
  bool requires_grad() const;

 private:
  Graph<T>* graph_ = nullptr;
  NodeId id_ = 0;
};

/// Gradients of a scalar loss, keyed by node id. Same shape as the forward value.
template <class T>
class Gradients {
 public:
  std::span<const T> of(const Tensor<T>& t) const;
  bool has(const Tensor<T>& t) const { return grads_.count(t.id()) != 0; }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Graph<T>;
  std::unordered_map<NodeId, std::vector<T>> grads_;
};

template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  /// With recording off no backward rules are stored; forward values are unchanged.
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  Tensor<T> constant(Shape shape, std::vector<T> values);
  Tensor<T> constant(Shape shape, std::span<const float> values);
  Tensor<T> scalar(T v) { return constant(Shape{1}, std::vector<T>{v}); }
  Tensor<T> full(Shape shape, T v) {
    auto n = shape.numel();
    return constant(std::move(shape), std::vector<T>(n, v));
  }
  /// Trainable leaf: its gradient is always reported by backward().
  Tensor<T> parameter(Shape shape, std::vector<T> values);

  /// Reverse sweep from a scalar loss. Each node that carries gradient is
  /// visited exactly once.
  Gradients<T> backward(const Tensor<T>& loss);
  std::size_t backward_visits() const { return visits_; }

  const Shape& shape(NodeId id) const { return nodes_[id].shape; }
  std::span<const T> value(NodeId id) const { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

  // Operation-author interface.
  Tensor<T> emplace(Shape shape, std::vector<T> value, std::initializer_list<Tensor<T>> parents,
                    BackwardFn fn);
  std::span<const T> grad(NodeId id) const { return nodes_[id].grad; }
  /// Gradient buffer of a parent, zero-initialized on first access.
  std::span<T> grad_buffer(NodeId id);

 private:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    bool trainable = false;
    BackwardFn backward;
  };

  bool recording_ = true;
  std::size_t visits_ = 0;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations

enum class UnaryOp { neg, exp, log_safe, sin, cos, abs, relu, sigmoid };
enum class BinaryOp { add, sub, mul, div };

/// Lower clamp applied before log in UnaryOp::log_safe.
inline constexpr double kLogFloor = 1e-12;

template <class T>
Tensor<T> apply(UnaryOp op, const Tensor<T>& x);
/// Shapes must match exactly, or one side must be a single element.
template <class T>
Tensor<T> apply(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b);

template <class T> Tensor<T> neg(const Tensor<T>& x) { return apply(UnaryOp::neg, x); }
template <class T> Tensor<T> exp(const Tensor<T>& x) { return apply(UnaryOp::exp, x); }
template <class T> Tensor<T> log_safe(const Tensor<T>& x) { return apply(UnaryOp::log_safe, x); }
template <class T> Tensor<T> sin(const Tensor<T>& x) { return apply(UnaryOp::sin, x); }
template <class T> Tensor<T> cos(const Tensor<T>& x) { return apply(UnaryOp::cos, x); }
template <class T> Tensor<T> abs(const Tensor<T>& x) { return apply(UnaryOp::abs, x); }
template <class T> Tensor<T> relu(const Tensor<T>& x) { return apply(UnaryOp::relu, x); }
template <class T> Tensor<T> sigmoid(const Tensor<T>& x) { return apply(UnaryOp::sigmoid, x); }

template <class T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return apply(BinaryOp::add, a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return apply(BinaryOp::sub, a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return apply(BinaryOp::mul, a, b); }
template <class T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return apply(BinaryOp::div, a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& x) { return neg(x); }

/// x * c + offset with constants c and offset.
template <class T>
Tensor<T> affine(const Tensor<T>& x, T scale, T offset = T(0));

/// [m x k] . [k x n] -> [m x n]
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Adds bias [n] to every row of x [m x n].
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <class T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis);

/// Running product along the second axis of a [W x D] tensor. With exclusive
/// set, element d is the product of elements 0..d-1 and element 0 is 1.
template <class T>
Tensor<T> cumprod_depth(const Tensor<T>& x, bool exclusive);

/// Same-size correlation of a [W x D] tensor with a constant odd-sized kernel,
/// zero padded.
template <class T>
Tensor<T> conv2d_same(const Tensor<T>& x, const Kernel2D& kernel);

template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Column j of an [m x n] tensor as shape [m].
template <class T>
Tensor<T> column(const Tensor<T>& x, std::size_t j);

/// Contiguous flat slice viewed as `shape`.
template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t offset, Shape shape);

/// Forward value `sample`, backward identity into `prob` (straight-through).
template <class T>
Tensor<T> straight_through(const Tensor<T>& prob, std::vector<T> sample);

/// Binary-concrete relaxation: sigmoid((noise + logit(p)) / temperature), with
/// `noise` holding logistic draws log(u) - log(1 - u). p in {0, 1} maps to
/// exactly {0, 1} with zero gradient.
template <class T>
Tensor<T> relaxed_bernoulli(const Tensor<T>& prob, std::span<const double> noise, double temperature);

// ---------------------------------------------------------------------------
// Gradient checking

/// max |a - b| / max(|a|, |b|, 1e-8) over components.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);
/// Euclidean norm of the difference over the norm of `numeric`.
double norm_relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Reverse-mode gradient of scalar f at `point`, computed in T.
/// `f` is called as f(Graph<U>&, Tensor<U>); generic lambdas fit.
template <class T, class F>
std::vector<double> analytic_gradient(F&& f, std::span<const double> point) {
  Graph<T> g;
  std::vector<T> x0(point.begin(), point.end());
  auto x = g.parameter(Shape{point.size()}, std::move(x0));
  auto y = f(g, x);
  if (y.numel() != 1) throw ShapeError("gradcheck: function must be scalar, got " + y.shape().str());
  auto grads = g.backward(y);
  auto gx = grads.of(x);
  return {gx.begin(), gx.end()};
}

/// Central-difference gradient evaluated in long double, whose rounding noise
/// stays far below the 64-bit tolerance even for components near 1e-8. When
/// the quotients at h and h/8 disagree, a kink lies inside the stencil and the
/// step keeps shrinking (at most three times).
template <class F>
std::vector<double> numeric_gradient(F&& f, std::span<const double> point, double epsilon) {
  using Oracle = long double;
  std::vector<Oracle> p(point.begin(), point.end());
  auto quotient = [&](std::size_t i, Oracle h) {
    const Oracle orig = p[i];
    p[i] = orig + h;
    Graph<Oracle> gh(false);
    const Oracle hi = f(gh, gh.constant(Shape{p.size()}, p)).item();
    p[i] = orig - h;
    Graph<Oracle> gl(false);
    const Oracle lo = f(gl, gl.constant(Shape{p.size()}, p)).item();
    p[i] = orig;
    return (hi - lo) / (2 * h);
  };
  std::vector<double> numeric(point.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto h = static_cast<Oracle>(epsilon);
    Oracle coarse = quotient(i, h);
    for (int level = 0; level < 3; ++level) {
      const Oracle fine = quotient(i, h / 8);
      const Oracle scale = std::max({std::abs(coarse), std::abs(fine), static_cast<Oracle>(1e-7)});
      if (std::abs(coarse - fine) <= 1e-6L * scale) break;
      coarse = fine;
      h /= 8;
    }
    numeric[i] = static_cast<double>(coarse);
  }
  return numeric;
}

/// max_relative_error(analytic gradient in T, central differences).
template <class T, class F>
double gradcheck(F&& f, std::span<const double> point, double epsilon) {
  const auto analytic = analytic_gradient<T>(f, point);
  const auto numeric = numeric_gradient(f, point, epsilon);
  return max_relative_error(analytic, numeric);
}

}  // namespace unerf::diff
