#include <random>

#include "doctest.h"
#include "ultranerf/diff.hpp"
#include "ultranerf/gradcheck_suite.hpp"

using namespace unerf;
using namespace unerf::diff;

namespace {

std::vector<double> vals(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

std::vector<double> grad_of(const Gradients<double>& g, const Tensor<double>& t) {
  auto s = g.of(t);
  return {s.begin(), s.end()};
}

}  // namespace

TEST_CASE("elementwise examples") {
  Graph<double> g;
  CHECK(sigmoid(g.scalar(0.0)).item() == 0.5);
  CHECK(relu(g.scalar(-1.0)).item() == 0.0);
  auto x = g.parameter(Shape{1}, {-2.5});
  auto y = abs(x);
  CHECK(y.item() == 2.5);
  auto grads = g.backward(sum(y));
  CHECK(grads.of(x)[0] == -1.0);
}

TEST_CASE("subgradients at zero are zero") {
  Graph<double> g;
  auto x = g.parameter(Shape{1}, {0.0});
  auto grads = g.backward(relu(x) + abs(x));
  CHECK(grads.of(x)[0] == 0.0);
}

TEST_CASE("log_safe clamps small inputs") {
  Graph<double> g;
  auto y = log_safe(g.constant(Shape{2}, std::vector<double>{0.0, -3.0}));
  CHECK(y.values()[0] == doctest::Approx(std::log(kLogFloor)));
  CHECK(std::isfinite(y.values()[1]));
}

TEST_CASE("elementwise shape mismatch names both shapes") {
  Graph<double> g;
  auto a = g.full(Shape{2, 3}, 1.0);
  auto b = g.full(Shape{3, 2}, 1.0);
  try {
    (void)(a + b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
}

TEST_CASE("scalar broadcast") {
  Graph<double> g;
  auto a = g.constant(Shape{3}, std::vector<double>{1, 2, 3});
  CHECK(vals(a * g.scalar(2.0)) == std::vector<double>{2, 4, 6});
  CHECK(vals(g.scalar(1.0) - a) == std::vector<double>{0, -1, -2});
}

TEST_CASE("matmul examples") {
  Graph<double> g;
  auto eye = g.constant(Shape{2, 2}, std::vector<double>{1, 0, 0, 1});
  CHECK(vals(matmul(eye, eye)) == std::vector<double>{1, 0, 0, 1});
  auto a = g.constant(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
  auto b = g.constant(Shape{2, 1}, std::vector<double>{1, 1});
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(vals(c) == std::vector<double>{3, 7});
  CHECK_THROWS_AS(matmul(a, g.full(Shape{3, 1}, 1.0)), ShapeError);
}

TEST_CASE("gradient of sum(A B) w.r.t. A is ones times B transposed") {
  Graph<double> g;
  auto A = g.parameter(Shape{2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  auto B = g.constant(Shape{3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  auto grads = g.backward(sum(matmul(A, B)));
  // Row sums of B, repeated for each row of A.
  CHECK(grad_of(grads, A) == std::vector<double>{3, 7, 11, 3, 7, 11});
}

TEST_CASE("concat examples") {
  Graph<double> g;
  auto a = g.parameter(Shape{2}, {1, 2});
  auto b = g.parameter(Shape{1}, {3});
  auto c = concat(a, b, 0);
  CHECK(vals(c) == std::vector<double>{1, 2, 3});
  auto grads = g.backward(sum(c));
  CHECK(grad_of(grads, a) == std::vector<double>{1, 1});
  CHECK(grad_of(grads, b) == std::vector<double>{1});

  Graph<double> h;
  auto wide = concat(h.full(Shape{2, 3}, 1.0), h.full(Shape{2, 5}, 2.0), 1);
  CHECK(wide.shape() == Shape{2, 8});
  CHECK(wide.values()[2] == 1.0);
  CHECK(wide.values()[3] == 2.0);
  CHECK_THROWS_AS(concat(h.full(Shape{2, 3}, 1.0), h.full(Shape{3, 3}, 1.0), 1), ShapeError);
  CHECK_THROWS_AS(concat(h.full(Shape{2, 3}, 1.0), h.full(Shape{2, 3}, 1.0), 2), ShapeError);
}

TEST_CASE("cumprod examples") {
  Graph<double> g;
  auto x = g.constant(Shape{1, 3}, std::vector<double>{0.5, 0.5, 0.5});
  CHECK(vals(cumprod_depth(x, true)) == std::vector<double>{1.0, 0.5, 0.25});
  CHECK(vals(cumprod_depth(x, false)) == std::vector<double>{0.5, 0.25, 0.125});
  auto ones = g.full(Shape{3, 4}, 1.0);
  for (double v : cumprod_depth(ones, true).values()) CHECK(v == 1.0);
}

TEST_CASE("exclusive cumprod times input reconstructs inclusive cumprod") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.2, 1.8);
  Graph<double> g;
  std::vector<double> v(5 * 7);
  for (auto& x : v) x = u(rng);
  auto x = g.constant(Shape{5, 7}, v);
  auto ex = cumprod_depth(x, true);
  auto in = cumprod_depth(x, false);
  auto ratio = in / ex;
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(ratio.values()[i] == doctest::Approx(v[i]).epsilon(1e-12));
}

TEST_CASE("cumprod gradient on a random 4x6 input") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::vector<double> p(24);
  for (auto& x : p) x = u(rng);
  auto f = [](auto& g, auto x) {
    auto y = cumprod_depth(reshape(x, Shape{4, 6}), true);
    return sum(y * y);
  };
  CHECK(gradcheck<double>(f, p, 1e-5) < 1e-5);
  CHECK(gradcheck<float>(f, p, 1e-5) < 1e-3);
}

TEST_CASE("conv2d_same examples") {
  Graph<double> g;
  std::vector<double> v{1, 2, 3, 4, 5, 6};
  auto x = g.constant(Shape{2, 3}, v);
  CHECK(vals(conv2d_same(x, Kernel2D::identity())) == v);
  for (double y : conv2d_same(g.full(Shape{4, 4}, 0.0), Kernel2D{3, 3, std::vector<double>(9, 1.0 / 9)}).values())
    CHECK(y == 0.0);

  Kernel2D k{3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}};
  std::vector<double> onehot(25, 0.0);
  onehot[2 * 5 + 2] = 1.0;
  auto r = conv2d_same(g.constant(Shape{5, 5}, onehot), k);
  // Correlation spreads an impulse into the kernel rotated by 180 degrees.
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) CHECK(r.values()[(1 + a) * 5 + 1 + b] == k.at(2 - a, 2 - b));
  CHECK(r.values()[0] == 0.0);
  CHECK_THROWS_AS(conv2d_same(x, Kernel2D{2, 1, {0.5, 0.5}}), ShapeError);
}

TEST_CASE("backward examples") {
  Graph<double> g;
  auto x = g.parameter(Shape{3}, {4, 5, 6});
  CHECK(grad_of(g.backward(sum(x)), x) == std::vector<double>{1, 1, 1});

  Graph<double> h;
  auto y = h.parameter(Shape{2}, {1, 2});
  CHECK(grad_of(h.backward(sum(y * y)), y) == std::vector<double>{2, 4});

  CHECK_THROWS_AS(h.backward(y * y), ShapeError);
}

TEST_CASE("gradient of the loss with respect to itself is one") {
  Graph<double> g;
  auto x = g.parameter(Shape{2}, {1, 2});
  auto loss = sum(exp(x));
  auto grads = g.backward(loss);
  REQUIRE(grads.has(loss));
  CHECK(grads.of(loss)[0] == 1.0);
}

TEST_CASE("backward visits each node once") {
  Graph<double> g;
  auto x = g.parameter(Shape{3}, {0.1, 0.2, 0.3});
  auto a = sin(x);
  auto b = a * a + a;  // a is consumed three times
  auto loss = sum(b * x);
  const std::size_t nodes = g.size();
  g.backward(loss);
  CHECK(g.backward_visits() == nodes);
}

TEST_CASE("trainable leaves always get a gradient") {
  Graph<double> g;
  auto used = g.parameter(Shape{2}, {1, 2});
  auto unused = g.parameter(Shape{2}, {3, 4});
  auto grads = g.backward(sum(used));
  CHECK(grads.has(unused));
  CHECK(grad_of(grads, unused) == std::vector<double>{0, 0});
}

TEST_CASE("recording does not change forward values") {
  auto build = [](Graph<float>& g) {
    auto x = g.constant(Shape{3, 4}, std::vector<float>{.1f, .2f, .3f, .4f, .5f, .6f, .7f, .8f, .9f, 1.f, 1.1f, 1.2f});
    auto y = conv2d_same(sigmoid(x) * cos(x), Kernel2D{3, 3, std::vector<double>(9, 0.1)});
    auto z = cumprod_depth(y, true);
    return std::vector<float>(z.values().begin(), z.values().end());
  };
  Graph<float> on(true), off(false);
  CHECK(build(on) == build(off));
}

TEST_CASE("straight-through passes gradients unchanged") {
  Graph<double> g;
  auto p = g.parameter(Shape{3}, {0.2, 0.5, 0.9});
  auto s = straight_through(p, std::vector<double>{0, 1, 1});
  CHECK(vals(s) == std::vector<double>{0, 1, 1});
  auto grads = g.backward(sum(affine(s, 3.0)));
  CHECK(grad_of(grads, p) == std::vector<double>{3, 3, 3});
}

TEST_CASE("relaxed Bernoulli endpoints are exact") {
  Graph<double> g;
  auto p = g.parameter(Shape{2}, {0.0, 1.0});
  std::vector<double> noise{0.3, -0.7};
  auto y = relaxed_bernoulli(p, noise, 0.1);
  CHECK(vals(y) == std::vector<double>{0.0, 1.0});
  auto grads = g.backward(sum(y));
  CHECK(grad_of(grads, p) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("relaxed Bernoulli matches the binary-concrete formula") {
  Graph<double> g;
  const double p = 0.3, n = 0.4, tau = 0.5;
  auto y = relaxed_bernoulli(g.constant(Shape{1}, std::vector<double>{p}), std::vector<double>{n}, tau);
  const double expected = 1.0 / (1.0 + std::exp(-(n + std::log(p / (1 - p))) / tau));
  CHECK(y.item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gradcheck examples") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> p(6);
  for (auto& x : p) x = n(rng);
  CHECK(gradcheck<double>([](auto&, auto x) { return sum(sigmoid(x)); }, p, 1e-5) < 1e-4);
  CHECK(gradcheck<double>(
            [](auto&, auto x) {
              using T = std::remove_cvref_t<decltype(x.values()[0])>;
              return sum(affine(x, T(3), T(1)));
            },
            p, 1e-3) < 1e-12);

  std::vector<double> zero(4, 0.0);
  auto a = analytic_gradient<double>([](auto&, auto x) { return sum(exp(x)); }, zero);
  for (double v : a) CHECK(v == 1.0);
}

TEST_CASE("max relative error uses a floored denominator") {
  std::vector<double> a{1.0, 0.0, 1e-12};
  std::vector<double> b{1.1, 0.0, 0.0};
  CHECK(max_relative_error(a, b) == doctest::Approx(0.1 / 1.1));
  std::vector<double> c{0.0}, d{1e-12};
  CHECK(max_relative_error(c, d) == doctest::Approx(1e-4));
}

TEST_CASE("numeric gradient steps past a kink inside the stencil") {
  // |x| at 2e-6 with h = 1e-5: the plain central difference straddles 0.
  std::vector<double> p{2e-6};
  auto num = numeric_gradient([](auto&, auto x) { return sum(abs(x)); }, p, 1e-5);
  CHECK(num[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("every registered operation passes gradcheck in 64-bit") {
  const auto cases = run_gradcheck_suite(2, 2);
  CHECK(cases.size() > 20);
  for (const auto& c : cases) {
    INFO(c.name);
    CHECK(c.max_error_64 < kGradTol64);
    CHECK(c.max_error_32 < (c.name == "field_render_loss" ? 1e-2 : kGradTol32));
  }
}
