#include "ultranerf/diff.hpp"

#include <Eigen/Core>
#include <sstream>

namespace unerf::diff {

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

double Kernel2D::sum() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

template <class T>
const Shape& Tensor<T>::shape() const {
  return graph_->shape(id_);
}

template <class T>
std::span<const T> Tensor<T>::values() const {
  return graph_->value(id_);
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
  return values()[0];
}

template <class T>
bool Tensor<T>::requires_grad() const {
  return graph_->requires_grad(id_);
}

template <class T>
std::span<const T> Gradients<T>::of(const Tensor<T>& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return {};
  return it->second;
}

template <class T>
Tensor<T> Graph<T>::constant(Shape shape, std::vector<T> values) {
  if (shape.numel() != values.size())
    throw ShapeError("constant: shape " + shape.str() + " does not hold " + std::to_string(values.size()) +
                     " values");
  nodes_.push_back(Node{std::move(shape), std::move(values), {}, false, false, {}});
  return {this, nodes_.size() - 1};
}

template <class T>
Tensor<T> Graph<T>::constant(Shape shape, std::span<const float> values) {
  return constant(std::move(shape), std::vector<T>(values.begin(), values.end()));
}

template <class T>
Tensor<T> Graph<T>::parameter(Shape shape, std::vector<T> values) {
  auto t = constant(std::move(shape), std::move(values));
  nodes_.back().requires_grad = recording_;
  nodes_.back().trainable = recording_;
  return t;
}

template <class T>
Tensor<T> Graph<T>::emplace(Shape shape, std::vector<T> value, std::initializer_list<Tensor<T>> parents,
                            BackwardFn fn) {
  bool needs = false;
  if (recording_) {
    for (const auto& p : parents) needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(shape), std::move(value), {}, needs, false, needs ? std::move(fn) : BackwardFn{}});
  return {this, nodes_.size() - 1};
}

template <class T>
std::span<T> Graph<T>::grad_buffer(NodeId id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

template <class T>
Gradients<T> Graph<T>::backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar, got " + loss.shape().str());
  for (auto& n : nodes_) n.grad.clear();
  visits_ = 0;
  Gradients<T> out;
  if (!nodes_[loss.id()].requires_grad) return out;
  nodes_[loss.id()].grad.assign(1, T(1));
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (n.grad.empty() || !n.requires_grad) continue;
    ++visits_;
    if (n.backward) n.backward(*this, id);
  }
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    auto& n = nodes_[id];
    if (n.trainable) {
      if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
      out.grads_.emplace(id, std::move(n.grad));
    } else if (!n.grad.empty()) {
      out.grads_.emplace(id, std::move(n.grad));
    }
    n.grad.clear();
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
T sigmoid_scalar(T v) {
  if (v >= T(0)) {
    const T e = std::exp(-v);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <class T>
Graph<T>& graph_of(const Tensor<T>& a, const Tensor<T>& b) {
  if (&a.graph() != &b.graph()) throw std::invalid_argument("tensors belong to different graphs");
  return a.graph();
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<const RowMat<T>> as_matrix(std::span<const T> v, std::size_t rows, std::size_t cols) {
  return {v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <class T>
Eigen::Map<RowMat<T>> as_matrix(std::span<T> v, std::size_t rows, std::size_t cols) {
  return {v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

void require_2d(const Shape& s, const char* op) {
  if (s.rank() != 2) throw ShapeError(std::string(op) + ": expected a 2-dimensional tensor, got " + s.str());
}

}  // namespace

template <class T>
Tensor<T> apply(UnaryOp op, const Tensor<T>& x) {
  auto& g = x.graph();
  auto xv = x.values();
  std::vector<T> y(xv.size());
  switch (op) {
    case UnaryOp::neg:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = -xv[i];
      break;
    case UnaryOp::exp:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::exp(xv[i]);
      break;
    case UnaryOp::log_safe:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(std::max(xv[i], static_cast<T>(kLogFloor)));
      break;
    case UnaryOp::sin:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::sin(xv[i]);
      break;
    case UnaryOp::cos:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::cos(xv[i]);
      break;
    case UnaryOp::abs:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::abs(xv[i]);
      break;
    case UnaryOp::relu:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
      break;
    case UnaryOp::sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = sigmoid_scalar(xv[i]);
      break;
  }
  const NodeId xid = x.id();
  return g.emplace(x.shape(), std::move(y), {x}, [op, xid](Graph<T>& gr, NodeId self) {
    auto gy = gr.grad(self);
    auto yv = gr.value(self);
    auto xv = gr.value(xid);
    auto gx = gr.grad_buffer(xid);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      T d = 0;
      switch (op) {
        case UnaryOp::neg: d = T(-1); break;
        case UnaryOp::exp: d = yv[i]; break;
        case UnaryOp::log_safe: d = xv[i] >= static_cast<T>(kLogFloor) ? T(1) / xv[i] : T(0); break;
        case UnaryOp::sin: d = std::cos(xv[i]); break;
        case UnaryOp::cos: d = -std::sin(xv[i]); break;
        case UnaryOp::abs: d = xv[i] > T(0) ? T(1) : (xv[i] < T(0) ? T(-1) : T(0)); break;
        case UnaryOp::relu: d = xv[i] > T(0) ? T(1) : T(0); break;
        case UnaryOp::sigmoid: {
          // s(x) s(-x) from x itself: 1 - s loses its digits once s is near 1.
          const T e = std::exp(-std::abs(xv[i]));
          d = e / ((T(1) + e) * (T(1) + e));
          break;
        }
      }
      gx[i] += gy[i] * d;
    }
  });
}

template <class T>
Tensor<T> apply(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  auto& g = graph_of(a, b);
  const auto na = a.numel();
  const auto nb = b.numel();
  Shape out_shape;
  if (a.shape() == b.shape()) {
    out_shape = a.shape();
  } else if (na == 1) {
    out_shape = b.shape();
  } else if (nb == 1) {
    out_shape = a.shape();
  } else {
    throw ShapeError("elementwise: incompatible shapes " + a.shape().str() + " and " + b.shape().str());
  }
  const std::size_t n = out_shape.numel();
  const std::size_t sa = na == 1 && n != 1 ? 0 : 1;
  const std::size_t sb = nb == 1 && n != 1 ? 0 : 1;
  auto av = a.values();
  auto bv = b.values();
  std::vector<T> y(n);
  switch (op) {
    case BinaryOp::add:
      for (std::size_t i = 0; i < n; ++i) y[i] = av[i * sa] + bv[i * sb];
      break;
    case BinaryOp::sub:
      for (std::size_t i = 0; i < n; ++i) y[i] = av[i * sa] - bv[i * sb];
      break;
    case BinaryOp::mul:
      for (std::size_t i = 0; i < n; ++i) y[i] = av[i * sa] * bv[i * sb];
      break;
    case BinaryOp::div:
      for (std::size_t i = 0; i < n; ++i) y[i] = av[i * sa] / bv[i * sb];
      break;
  }
  const NodeId aid = a.id();
  const NodeId bid = b.id();
  return g.emplace(std::move(out_shape), std::move(y), {a, b}, [=](Graph<T>& gr, NodeId self) {
    auto gy = gr.grad(self);
    auto av = gr.value(aid);
    auto bv = gr.value(bid);
    if (gr.requires_grad(aid)) {
      auto ga = gr.grad_buffer(aid);
      for (std::size_t i = 0; i < gy.size(); ++i) {
        T d = 0;
        switch (op) {
          case BinaryOp::add: d = T(1); break;
          case BinaryOp::sub: d = T(1); break;
          case BinaryOp::mul: d = bv[i * sb]; break;
          case BinaryOp::div: d = T(1) / bv[i * sb]; break;
        }
        ga[i * sa] += gy[i] * d;
      }
    }
    if (gr.requires_grad(bid)) {
      auto gb = gr.grad_buffer(bid);
      for (std::size_t i = 0; i < gy.size(); ++i) {
        T d = 0;
        switch (op) {
          case BinaryOp::add: d = T(1); break;
          case BinaryOp::sub: d = T(-1); break;
          case BinaryOp::mul: d = av[i * sa]; break;
          case BinaryOp::div: {
            const T bb = bv[i * sb];
            d = -av[i * sa] / (bb * bb);
            break;
          }
        }
        gb[i * sb] += gy[i] * d;
      }
    }
  });
}

template <class T>
Tensor<T> affine(const Tensor<T>& x, T scale, T offset) {
  auto xv = x.values();
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * scale + offset;
  const NodeId xid = x.id();
  return x.graph().emplace(x.shape(), std::move(y), {x}, [xid, scale](Graph<T>& gr, NodeId self) {
    auto gy = gr.grad(self);
    auto gx = gr.grad_buffer(xid);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * scale;
  });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  auto& g = graph_of(a, b);
  require_2d(a.shape(), "matmul");
  require_2d(b.shape(), "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw ShapeError("matmul: inner dimensions differ: " + a.shape().str() + " and " + b.shape().str());
  std::vector<T> y(m * n);
  as_matrix(std::span<T>(y), m, n).noalias() = as_matrix(a.values(), m, k) * as_matrix(b.values(), k, n);
  const NodeId aid = a.id(), bid = b.id();
  return g.emplace(Shape{m, n}, std::move(y), {a, b}, [=](Graph<T>& gr, NodeId self) {
    auto gc = as_matrix(gr.grad(self), m, n);
    if (gr.requires_grad(aid)) {
      as_matrix(gr.grad_buffer(aid), m, k).noalias() += gc * as_matrix(gr.value(bid), k, n).transpose();
    }
    if (gr.requires_grad(bid)) {
      as_matrix(gr.grad_buffer(bid), k, n).noalias() += as_matrix(gr.value(aid), m, k).transpose() * gc;
    }
  });
}

template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  auto& g = graph_of(x, bias);
  require_2d(x.shape(), "add_bias");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (bias.numel() != n) throw ShapeError("add_bias: bias " + bias.shape().str() + " does not match " + x.shape().str());
  auto xv = x.values();
  auto bv = bias.values();
  std::vector<T> y(m * n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] = xv[r * n + c] + bv[c];
  const NodeId xid = x.id(), bid = bias.id();
  return g.emplace(x.shape(), std::move(y), {x, bias}, [=](Graph<T>& gr, NodeId self) {
    auto gy = gr.grad(self);
    if (gr.requires_grad(xid)) {
      auto gx = gr.grad_buffer(xid);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    }
    if (gr.requires_grad(bid)) {
      auto gb = gr.grad_buffer(bid);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += gy[r * n + c];
    }
  });
}

template <class T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
  auto& g = graph_of(a, b);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.rank() != sb.rank())
    throw ShapeError("concat: rank mismatch " + sa.str() + " and " + sb.str());
  if (axis >= sa.rank())
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + sa.str());
  for (std::size_t d = 0; d < sa.rank(); ++d)
    if (d != axis && sa[d] != sb[d]) throw ShapeError("concat: dimension mismatch " + sa.str() + " and " + sb.str());
  // View both as [outer x (inner_a | inner_b)].
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= sa[d];
  const std::size_t ia = sa.numel() / std::max<std::size_t>(outer, 1);
  const std::size_t ib = sb.numel() / std::max<std::size_t>(outer, 1);
  Shape out = sa;
  out.dims[axis] += sb[axis];
  std::vector<T> y(out.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.begin() + o * ia, ia, y.begin() + o * (ia + ib));
    std::copy_n(bv.begin() + o * ib, ib, y.begin() + o * (ia + ib) + ia);
  }
  const NodeId aid = a.id(), bid = b.id();
  return g.emplace(std::move(out), std::move(y), {a, b}, [=](Graph<T>& gr, NodeId self) {
    auto gy = gr.grad(self);
    if (gr.requires_grad(aid)) {
      auto ga = gr.grad_buffer(aid);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < ia; ++i) ga[o * ia + i] += gy[o * (ia + ib) + i];
    }
    if (gr.requires_grad(bid)) {
      auto gb = gr.grad_buffer(bid);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < ib; ++i) gb[o * ib + i] += gy[o * (ia + ib) + ia + i];
    }
  });
}

template <class T>
Tensor<T> cumprod_depth(const Tensor<T>& x, bool exclusive) {
  require_2d(x.shape(), "cumprod_depth");
  const std::size_t rows = x.shape()[0], depth = x.shape()[1];
  auto xv = x.values();
  std::vector<T> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = T(1);
    for (std::size_t d = 0; d < depth; ++d) {
      const std::size_t i = r * depth + d;
      if (exclusive) {
        y[i] = acc;
        acc *= xv[i];
      } else {
        acc *= xv[i];
        y[i] = acc;
      }
    }
  }
  const NodeId xid = x.id();
  return x.graph().emplace(x.shape(), std::move(y), {x}, [=](Graph<T>& gr, NodeId self) {
    // Division-free: with P_j the product of x_0..x_{j-1}, the exclusive case
    // has dL/dx_j = P_j * S_j where S_j = g_{j+1} + x_{j+1} S_{j+1}.
    auto gy = gr.grad(self);
    auto xv = gr.value(xid);
    auto gx = gr.grad_buffer(xid);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * depth;
      T prefix_excl = T(1);
      std::vector<T> prefix(depth);
      for (std::size_t d = 0; d < depth; ++d) {
        prefix[d] = prefix_excl;
        prefix_excl *= xv[base + d];
      }
      T s = T(0);
      for (std::size_t d = depth; d-- > 0;) {
        if (exclusive) {
          // s currently holds S_d.
          gx[base + d] += prefix[d] * s;
          s = gy[base + d] + xv[base + d] * s;
        } else {
          // Inclusive: dL/dx_j = P_j * (g_j + x_{j+1} g_{j+1} + ...).
          s = gy[base + d] + (d + 1 < depth ? xv[base + d + 1] * s : T(0));
          gx[base + d] += prefix[d] * s;
        }
      }
    }
  });
}

namespace {

template <class T>
void correlate(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols, const Kernel2D& k,
               bool flipped) {
  const auto hr = static_cast<std::ptrdiff_t>(k.rows / 2);
  const auto hc = static_cast<std::ptrdiff_t>(k.cols / 2);
  const auto R = static_cast<std::ptrdiff_t>(rows);
  const auto C = static_cast<std::ptrdiff_t>(cols);
  for (std::ptrdiff_t i = 0; i < R; ++i) {
    for (std::ptrdiff_t j = 0; j < C; ++j) {
      T acc = T(0);
      for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(k.rows); ++a) {
        const std::ptrdiff_t ii = flipped ? i - a + hr : i + a - hr;
        if (ii < 0 || ii >= R) continue;
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(k.cols); ++b) {
          const std::ptrdiff_t jj = flipped ? j - b + hc : j + b - hc;
          if (jj < 0 || jj >= C) continue;
          acc += static_cast<T>(k.weights[a * k.cols + b]) * in[ii * C + jj];
        }
      }
      out[i * C + j] += acc;
    }
  }
}

}  // namespace

template <class T>
Tensor<T> conv2d_same(const Tensor<T>& x, const Kernel2D& kernel) {
  require_2d(x.shape(), "conv2d_same");
  if (kernel.rows % 2 == 0 || kernel.cols % 2 == 0)
    throw ShapeError("conv2d_same: kernel dimensions must be odd, got [" + std::to_string(kernel.rows) + "x" +
                     std::to_string(kernel.cols) + "]");
  if (kernel.weights.size() != kernel.rows * kernel.cols) throw ShapeError("conv2d_same: malformed kernel");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  std::vector<T> y(x.numel(), T(0));
  correlate<T>(x.values(), y, rows, cols, kernel, false);
  const NodeId xid = x.id();
  return x.graph().emplace(x.shape(), std::move(y), {x}, [=](Graph<T>& gr, NodeId self) {
    correlate<T>(gr.grad(self), gr.grad_buffer(xid), rows, cols, kernel, true);
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T(0);
  for (T v : x.values()) s += v;
  const NodeId xid = x.id();
  return x.graph().emplace(Shape{1}, std::vector<T>{s}, {x}, [xid](Graph<T>& gr, NodeId self) {
    const T gy = gr.grad(self)[0];
    for (auto& v : gr.grad_buffer(xid)) v += gy;
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return affine(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape.numel() != x.numel())
    throw ShapeError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
  auto xv = x.values();
  const NodeId xid = x.id();
  return x.graph().emplace(std::move(shape), std::vector<T>(xv.begin(), xv.end()), {x},
                           [xid](Graph<T>& gr, NodeId self) {
                             auto gy = gr.grad(self);
                             auto gx = gr.grad_buffer(xid);
                             for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
                           });
}

template <class T>
Tensor<T> column(const Tensor<T>& x, std::size_t j) {
  require_2d(x.shape(), "column");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (j >= n) throw ShapeError("column: index " + std::to_string(j) + " out of range for " + x.shape().str());
  auto xv = x.values();
  std::vector<T> y(m);
  for (std::size_t r = 0; r < m; ++r) y[r] = xv[r * n + j];
  const NodeId xid = x.id();
  return x.graph().emplace(Shape{m}, std::move(y), {x}, [=](Graph<T>& gr, NodeId self) {
    auto gy = gr.grad(self);
    auto gx = gr.grad_buffer(xid);
    for (std::size_t r = 0; r < m; ++r) gx[r * n + j] += gy[r];
  });
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t offset, Shape shape) {
  const std::size_t n = shape.numel();
  if (offset + n > x.numel())
    throw ShapeError("slice: " + shape.str() + " at offset " + std::to_string(offset) + " exceeds " + x.shape().str());
  auto xv = x.values();
  const NodeId xid = x.id();
  return x.graph().emplace(std::move(shape), std::vector<T>(xv.begin() + offset, xv.begin() + offset + n), {x},
                           [=](Graph<T>& gr, NodeId self) {
                             auto gy = gr.grad(self);
                             auto gx = gr.grad_buffer(xid);
                             for (std::size_t i = 0; i < n; ++i) gx[offset + i] += gy[i];
                           });
}

template <class T>
Tensor<T> straight_through(const Tensor<T>& prob, std::vector<T> sample) {
  if (sample.size() != prob.numel())
    throw ShapeError("straight_through: sample size " + std::to_string(sample.size()) + " does not match " +
                     prob.shape().str());
  const NodeId pid = prob.id();
  return prob.graph().emplace(prob.shape(), std::move(sample), {prob}, [pid](Graph<T>& gr, NodeId self) {
    auto gy = gr.grad(self);
    auto gp = gr.grad_buffer(pid);
    for (std::size_t i = 0; i < gy.size(); ++i) gp[i] += gy[i];
  });
}

template <class T>
Tensor<T> relaxed_bernoulli(const Tensor<T>& prob, std::span<const double> noise, double temperature) {
  if (noise.size() != prob.numel())
    throw ShapeError("relaxed_bernoulli: noise size " + std::to_string(noise.size()) + " does not match " +
                     prob.shape().str());
  if (!(temperature > 0.0)) throw ConfigError("relaxed_bernoulli: temperature must be positive");
  auto pv = prob.values();
  std::vector<T> y(pv.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = static_cast<double>(pv[i]);
    if (p <= 0.0) {
      y[i] = T(0);
    } else if (p >= 1.0) {
      y[i] = T(1);
    } else {
      const double logit = std::log(p) - std::log1p(-p);
      y[i] = static_cast<T>(sigmoid_scalar((noise[i] + logit) / temperature));
    }
  }
  const NodeId pid = prob.id();
  return prob.graph().emplace(prob.shape(), std::move(y), {prob}, [pid, temperature](Graph<T>& gr, NodeId self) {
    auto gy = gr.grad(self);
    auto yv = gr.value(self);
    auto pv = gr.value(pid);
    auto gp = gr.grad_buffer(pid);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const T p = pv[i];
      if (p <= T(0) || p >= T(1)) continue;
      const T dy = yv[i] * (T(1) - yv[i]) / static_cast<T>(temperature);
      gp[i] += gy[i] * dy / (p * (T(1) - p));
    }
  });
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], b = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    worst = std::max(worst, std::abs(a - b) / denom);
  }
  return worst;
}

double norm_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff2 = 0.0, ref2 = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff2 += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    ref2 += numeric[i] * numeric[i];
  }
  return ref2 > 0.0 ? std::sqrt(diff2 / ref2) : std::sqrt(diff2);
}

#define UNERF_INSTANTIATE_DIFF(T)                                                              \
  template class Tensor<T>;                                                                    \
  template class Gradients<T>;                                                                 \
  template class Graph<T>;                                                                     \
  template Tensor<T> apply<T>(UnaryOp, const Tensor<T>&);                                      \
  template Tensor<T> apply<T>(BinaryOp, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> affine<T>(const Tensor<T>&, T, T);                                        \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> add_bias<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> concat<T>(const Tensor<T>&, const Tensor<T>&, std::size_t);               \
  template Tensor<T> cumprod_depth<T>(const Tensor<T>&, bool);                                 \
  template Tensor<T> conv2d_same<T>(const Tensor<T>&, const Kernel2D&);                        \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                      \
  template Tensor<T> column<T>(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> slice<T>(const Tensor<T>&, std::size_t, Shape);                           \
  template Tensor<T> straight_through<T>(const Tensor<T>&, std::vector<T>);                    \
  template Tensor<T> relaxed_bernoulli<T>(const Tensor<T>&, std::span<const double>, double);

UNERF_INSTANTIATE_DIFF(float)
UNERF_INSTANTIATE_DIFF(double)
UNERF_INSTANTIATE_DIFF(long double)

}  // namespace unerf::diff
