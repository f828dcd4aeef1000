#include "ultranerf/gradcheck_suite.hpp"

#include <cmath>
#include <random>

#include "ultranerf/diff.hpp"
#include "ultranerf/geometry.hpp"
#include "ultranerf/inr.hpp"
#include "ultranerf/metrics.hpp"
#include "ultranerf/renderer.hpp"
#include "ultranerf/rng.hpp"

namespace unerf::diff {

namespace {

template <class U>
std::vector<U> cast(const std::vector<double>& v) {
  return {v.begin(), v.end()};
}

/// sum(w * y) with fixed, uneven weights so symmetric mistakes do not cancel.
template <class U>
Tensor<U> weighted_sum(Graph<U>& g, const Tensor<U>& y) {
  std::vector<U> w(y.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<U>(0.5 + 0.1 * static_cast<double>(i % 7));
  return sum(y * g.constant(y.shape(), std::move(w)));
}

struct Range {
  double lo = -1.0, hi = 1.0;
  bool away_from_zero = false;  // draws |x| in [lo, hi] with random sign
};

class Runner {
 public:
  Runner(std::uint64_t seed, int points) : rng_(seed), points_(points) {}

  template <class F>
  void run(const std::string& name, std::size_t n, Range r, double eps, F&& f) {
    GradcheckCase c;
    c.name = name;
    for (int p = 0; p < points_; ++p) {
      const auto x = draw(n, r);
      const auto numeric = numeric_gradient(f, x, eps);
      c.max_error_64 = std::max(c.max_error_64, max_relative_error(analytic_gradient<double>(f, x), numeric));
      const auto a32 = analytic_gradient<float>(f, x);
      c.max_error_32 = std::max(c.max_error_32, max_relative_error(a32, numeric));
      c.norm_error_32 = std::max(c.norm_error_32, norm_relative_error(a32, numeric));
    }
    c.passed = c.max_error_64 < kGradTol64 && c.max_error_32 < kGradTol32;
    cases.push_back(std::move(c));
  }

  std::vector<double> draw(std::size_t n, Range r) {
    std::uniform_real_distribution<double> u(r.lo, r.hi);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> x(n);
    // Points are exactly representable in 32-bit so both passes see the same input.
    for (auto& v : x) v = static_cast<double>(static_cast<float>(r.away_from_zero && sign(rng_) ? -u(rng_) : u(rng_)));
    return x;
  }

  std::mt19937_64& rng() { return rng_; }

  std::vector<GradcheckCase> cases;

 private:
  std::mt19937_64 rng_;
  int points_;
};

constexpr double kEps = 1e-5;

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(std::uint64_t seed, int points) {
  Runner r(seed, points);

  const std::pair<const char*, UnaryOp> unary[] = {
      {"neg", UnaryOp::neg}, {"exp", UnaryOp::exp},   {"log_safe", UnaryOp::log_safe}, {"sin", UnaryOp::sin},
      {"cos", UnaryOp::cos}, {"abs", UnaryOp::abs},   {"relu", UnaryOp::relu},         {"sigmoid", UnaryOp::sigmoid}};
  for (const auto& [name, op] : unary) {
    Range range{-2.0, 2.0};
    if (op == UnaryOp::log_safe) range = {0.5, 2.0};
    if (op == UnaryOp::abs || op == UnaryOp::relu) range = {0.2, 2.0, true};
    r.run(name, 6, range, kEps, [op](auto& g, auto x) { return weighted_sum(g, apply(op, x)); });
  }

  const std::pair<const char*, BinaryOp> binary[] = {
      {"add", BinaryOp::add}, {"sub", BinaryOp::sub}, {"mul", BinaryOp::mul}, {"div", BinaryOp::div}};
  for (const auto& [name, op] : binary) {
    const Range range = op == BinaryOp::div ? Range{0.5, 1.5} : Range{-1.0, 1.0};
    r.run(name, 8, range, kEps, [op](auto& g, auto x) {
      auto a = slice(x, 0, Shape{4});
      auto b = slice(x, 4, Shape{4});
      return weighted_sum(g, apply(op, a * a, b));
    });
    r.run(std::string(name) + "_scalar", 5, range, kEps, [op](auto& g, auto x) {
      auto a = slice(x, 0, Shape{4});
      auto s = slice(x, 4, Shape{1});
      return weighted_sum(g, apply(op, a, s) * a) + weighted_sum(g, apply(op, s, a));
    });
  }

  r.run("affine", 5, {}, kEps, [](auto& g, auto x) {
    using U = std::remove_cvref_t<decltype(x.values()[0])>;
    return weighted_sum(g, affine(x * x, U(1.5), U(-0.25)));
  });
  r.run("matmul", 20, {}, kEps, [](auto& g, auto x) {
    auto a = slice(x, 0, Shape{3, 4});
    auto b = slice(x, 12, Shape{4, 2});
    return weighted_sum(g, matmul(a, b));
  });
  r.run("add_bias", 8, {}, kEps, [](auto& g, auto x) {
    auto m = slice(x, 0, Shape{3, 2});
    auto b = slice(x, 6, Shape{2});
    auto y = add_bias(m, b);
    return weighted_sum(g, y * y);
  });
  r.run("concat_axis0", 9, {}, kEps, [](auto& g, auto x) {
    auto y = concat(slice(x, 0, Shape{2, 3}), slice(x, 6, Shape{1, 3}), 0);
    return weighted_sum(g, y * y);
  });
  r.run("concat_axis1", 10, {}, kEps, [](auto& g, auto x) {
    auto y = concat(slice(x, 0, Shape{2, 3}), slice(x, 6, Shape{2, 2}), 1);
    return weighted_sum(g, y * y);
  });
  for (bool exclusive : {true, false}) {
    r.run(exclusive ? "cumprod_exclusive" : "cumprod_inclusive", 24, {0.5, 1.5}, kEps, [exclusive](auto& g, auto x) {
      return weighted_sum(g, cumprod_depth(reshape(x, Shape{4, 6}), exclusive));
    });
  }
  Kernel2D k{3, 5, {}};
  {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 15; ++i) k.weights.push_back(u(r.rng()));
  }
  r.run("conv2d_same", 30, {}, kEps, [k](auto& g, auto x) {
    auto y = conv2d_same(reshape(x, Shape{5, 6}), k);
    return weighted_sum(g, y * y);
  });
  r.run("sum", 6, {}, kEps, [](auto&, auto x) { return sum(x * x); });
  r.run("mean", 6, {}, kEps, [](auto&, auto x) { return mean(x * x); });
  r.run("reshape", 6, {}, kEps, [](auto& g, auto x) { return weighted_sum(g, reshape(x * x, Shape{2, 3})); });
  r.run("column", 12, {}, kEps, [](auto& g, auto x) {
    auto c = column(reshape(x, Shape{3, 4}), 2);
    return weighted_sum(g, c * c);
  });
  r.run("slice", 10, {}, kEps, [](auto& g, auto x) {
    auto s = slice(x, 3, Shape{2, 2});
    return weighted_sum(g, s * s);
  });
  {
    std::vector<double> noise(12);
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = rng::CounterKey{seed, 0, rng::MapKind::border}.logistic(i);
    r.run("relaxed_bernoulli", 12, {0.1, 0.9}, kEps,
          [noise](auto& g, auto x) { return weighted_sum(g, relaxed_bernoulli(x, noise, 0.5)); });
  }

  // SSIM-based loss on a random 8x12 prediction against a fixed target.
  const std::size_t w = 8, d = 12;
  std::vector<double> target(w * d);
  {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : target) v = static_cast<double>(static_cast<float>(u(r.rng())));
  }
  r.run("combined_loss", w * d, {0.0, 1.0}, kEps, [&target, w, d](auto& g, auto x) {
    using U = std::remove_cvref_t<decltype(x.values()[0])>;
    auto t = g.constant(Shape{w, d}, cast<U>(target));
    return metrics::combined_loss(reshape(x, Shape{w, d}), t);
  });

  // Renderer: parameter maps -> expected-mode image -> loss.
  render::RenderConfig rc;
  rc.mode = render::SamplingMode::expected;
  rc.psf = render::gaussian_psf(3, 3, 1.0, 0.75);
  r.run("render_expected", 5 * w * d, {-2.0, 2.0}, kEps, [&](auto& g, auto x) {
    using U = std::remove_cvref_t<decltype(x.values()[0])>;
    auto map = [&](std::size_t c) { return sigmoid(slice(x, c * w * d, Shape{w, d})); };
    render::ParamTensors<U> p{map(0), map(1), map(2), map(3), map(4)};
    auto img = render::render_frame(p, rc, 0).image;
    return metrics::combined_loss(img, g.constant(Shape{w, d}, cast<U>(target)));
  });

  // Field -> render -> loss through a small network, gradient w.r.t. every weight.
  inr::EncodingConfig enc{2, false};
  inr::MlpConfig mlp{8, 16, 5, enc.encoded_dim(3), 5};
  FrameSpec frame{static_cast<int>(w), static_cast<int>(d), 0.5, 0.5};
  const auto grid = frame_grid(Pose::tilt(10.0, Vec3(-2.0, -3.0, 0.5)), frame);
  VolumeBounds bounds{Vec3(-3, -4, -3), Vec3(3, 4, 3)};
  std::vector<Vec3> normalized;
  for (const auto& p : grid) normalized.push_back(bounds.normalize(p));
  const auto encoded = inr::encode_batch<double>(normalized, enc);
  GradcheckCase pipeline;
  pipeline.name = "field_render_loss";
  for (int p = 0; p < points; ++p) {
    const auto flat32 = inr::init_weights(seed * 7919 + static_cast<std::uint64_t>(p), mlp).flatten();
    std::vector<double> x(flat32.begin(), flat32.end());
    auto f = [&](auto& g, auto xt) {
      using U = std::remove_cvref_t<decltype(xt.values()[0])>;
      auto layers = inr::split_flat(xt, mlp);
      auto in = g.constant(Shape{grid.size(), static_cast<std::size_t>(enc.encoded_dim(3))}, cast<U>(encoded));
      auto raw = inr::mlp_forward(mlp, std::span<const inr::LayerParams<U>>(layers), in);
      auto t = inr::tissue_activation(raw);
      const Shape s{w, d};
      render::ParamTensors<U> params{reshape(t.alpha, s), reshape(t.beta, s), reshape(t.border, s),
                                     reshape(t.density, s), reshape(t.amplitude, s)};
      auto img = render::render_frame(params, rc, 0).image;
      return metrics::combined_loss(img, g.constant(s, cast<U>(target)));
    };
    const auto numeric = numeric_gradient(f, x, kEps);
    pipeline.max_error_64 = std::max(pipeline.max_error_64, max_relative_error(analytic_gradient<double>(f, x), numeric));
    const auto a32 = analytic_gradient<float>(f, x);
    pipeline.max_error_32 = std::max(pipeline.max_error_32, max_relative_error(a32, numeric));
    pipeline.norm_error_32 = std::max(pipeline.norm_error_32, norm_relative_error(a32, numeric));
  }
  pipeline.passed = pipeline.max_error_64 < kGradTol64 && pipeline.max_error_32 < kGradTol32;
  r.cases.push_back(std::move(pipeline));
  return std::move(r.cases);
}

}  // namespace unerf::diff
