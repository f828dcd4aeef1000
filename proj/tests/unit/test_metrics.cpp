#include <algorithm>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "ultranerf/metrics.hpp"

using namespace unerf;
using namespace unerf::metrics;

namespace {

Frame random_frame(std::mt19937_64& rng, std::size_t W, std::size_t D) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Frame f(W, D);
  for (auto& v : f.values) v = u(rng);
  return f;
}

}  // namespace

TEST_CASE("ssim window") {
  const SsimConfig cfg;
  const auto k = cfg.window_kernel();
  CHECK(k.rows == 11);
  CHECK(k.sum() == doctest::Approx(1.0).epsilon(1e-6));
  const auto [col, row] = cfg.separable_window();
  for (std::size_t a = 0; a < 11; ++a)
    for (std::size_t b = 0; b < 11; ++b) CHECK(col.weights[a] * row.weights[b] == doctest::Approx(k.at(a, b)).epsilon(1e-12));
  CHECK_THROWS_AS((SsimConfig{10, 1.5, 1e-4, 9e-4}.validate()), ConfigError);
}

TEST_CASE("ssim of an image with itself is one") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    const auto x = random_frame(rng, 16, 24);
    CHECK(std::abs(ssim(x, x) - 1.0) < 1e-6);
  }
  Frame flat(9, 9, 0.3f);
  CHECK(std::abs(ssim(flat, flat) - 1.0) < 1e-6);
}

TEST_CASE("ssim matches the brute-force window oracle") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    const auto a = random_frame(rng, 16, 16);
    const auto b = random_frame(rng, 16, 16);
    std::vector<double> ref_map;
    const double ref = oracle::ssim_brute(oracle::as_double(a), oracle::as_double(b), 16, 16, 11, 1.5, 1e-4, 9e-4, &ref_map);
    CHECK(std::abs(ssim(a, b) - ref) < 1e-6);
    const auto map = ssim_map(a, b);
    for (std::size_t j = 0; j < ref_map.size(); ++j) CHECK(std::abs(map.values[j] - ref_map[j]) < 1e-5);
  }
}

TEST_CASE("ssim of constant images follows the luminance term") {
  Frame zero(12, 12, 0.0f), one(12, 12, 1.0f);
  const double ref = oracle::ssim_brute(oracle::as_double(zero), oracle::as_double(one), 12, 12);
  CHECK(ref == doctest::Approx(1e-4 / (1.0 + 1e-4)).epsilon(1e-9));
  CHECK(std::abs(ssim(zero, one) - ref) < 1e-6);
}

TEST_CASE("mean ssim equals the mean of the map") {
  std::mt19937_64 rng(3);
  const auto a = random_frame(rng, 10, 20), b = random_frame(rng, 10, 20);
  const auto map = ssim_map(a, b);
  double m = 0.0;
  for (float v : map.values) m += v;
  CHECK(std::abs(m / static_cast<double>(map.size()) - ssim(a, b)) < 1e-6);
  for (float v : map.values) CHECK((v >= -1.0f && v <= 1.0f));
}

TEST_CASE("frames smaller than the window are supported") {
  std::mt19937_64 rng(4);
  const auto a = random_frame(rng, 3, 5), b = random_frame(rng, 3, 5);
  const double ref = oracle::ssim_brute(oracle::as_double(a), oracle::as_double(b), 3, 5);
  CHECK(std::abs(ssim(a, b) - ref) < 1e-6);
}

TEST_CASE("l2 examples") {
  std::mt19937_64 rng(5);
  const auto a = random_frame(rng, 6, 7), b = random_frame(rng, 6, 7);
  CHECK(l2(a, a) == 0.0);
  CHECK(l2(Frame(4, 4, 0.0f), Frame(4, 4, 1.0f)) == 1.0);
  CHECK(l2(a, b) == l2(b, a));
  CHECK_THROWS_AS(l2(a, Frame(7, 6)), ShapeError);
}

TEST_CASE("combined loss examples") {
  std::mt19937_64 rng(6);
  const auto a = random_frame(rng, 12, 16), b = random_frame(rng, 12, 16);
  CHECK(std::abs(combined_loss(a, a)) < 1e-6);
  LossConfig pure_l2;
  pure_l2.lambda = 0.0;
  CHECK(combined_loss(a, b, pure_l2) == doctest::Approx(l2(a, b)).epsilon(1e-6));
  const double mixed = combined_loss(a, b);
  CHECK(mixed == doctest::Approx(0.9 * (1.0 - ssim(a, b)) + 0.1 * l2(a, b)).epsilon(1e-6));
  CHECK(mixed > 0.0);
  LossConfig bad;
  bad.lambda = 1.5;
  CHECK_THROWS_AS(combined_loss(a, b, bad), ConfigError);
}

TEST_CASE("combined loss gradient vanishes at the minimum") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> target(8 * 12);
  for (auto& v : target) v = u(rng);
  auto f = [&](auto& g, auto x) {
    using T = std::remove_cvref_t<decltype(x.values()[0])>;
    auto pred = diff::reshape(x, diff::Shape{8, 12});
    auto tgt = g.constant(diff::Shape{8, 12}, std::vector<T>(target.begin(), target.end()));
    return combined_loss(pred, tgt);
  };
  const auto analytic = diff::analytic_gradient<double>(f, target);
  const auto numeric = diff::numeric_gradient(f, target, 1e-5);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    CHECK(std::abs(analytic[i]) < 1e-9);
    CHECK(std::abs(numeric[i]) < 1e-6);
  }
  std::vector<double> off = target;
  for (auto& v : off) v = std::clamp(v + 0.1 * (u(rng) - 0.5), 0.0, 1.0);
  CHECK(diff::gradcheck<double>(f, off, 1e-5) < 1e-5);
}

TEST_CASE("sweep statistics") {
  std::mt19937_64 rng(8);
  std::vector<Frame> a, b;
  for (int i = 0; i < 5; ++i) {
    a.push_back(random_frame(rng, 8, 8));
    b.push_back(random_frame(rng, 8, 8));
  }
  const auto same = sweep_ssim_stats(a, a);
  CHECK(std::abs(same.median - 1.0) < 1e-6);
  const auto one = sweep_ssim_stats(std::span<const Frame>(a.data(), 1), std::span<const Frame>(b.data(), 1));
  CHECK(one.median == doctest::Approx(ssim(a[0], b[0])).epsilon(1e-12));
  const auto s = sweep_ssim_stats(a, b);
  REQUIRE(s.per_frame.size() == 5);
  auto sorted = s.per_frame;
  std::sort(sorted.begin(), sorted.end());
  CHECK(s.median == sorted[2]);
  std::vector<Frame> ra(a.rbegin(), a.rend()), rb(b.rbegin(), b.rend());
  CHECK(sweep_ssim_stats(ra, rb).median == s.median);
  CHECK_THROWS_AS(sweep_ssim_stats(std::span<const Frame>(a.data(), 2), b), ShapeError);
}

TEST_CASE("median and pearson") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  std::vector<float> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{4, 3, 2, 1}, c{1, 1, 1, 1};
  CHECK(pearson(x, y) == doctest::Approx(1.0));
  CHECK(pearson(x, z) == doctest::Approx(-1.0));
  CHECK(pearson(x, c) == 0.0);
}

TEST_CASE("ssim drops below one for any visible perturbation; the loss is non-negative") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(-1e-3f, 1e-3f);
  for (int i = 0; i < 20; ++i) {
    const auto a = random_frame(rng, 12, 14);
    auto b = a;
    for (auto& v : b.values) v = std::clamp(v + u(rng), 0.0f, 1.0f);
    CHECK(ssim(a, b) < 1.0 - 1e-8);
    CHECK(combined_loss(a, b) > 0.0);
    CHECK(combined_loss(a, random_frame(rng, 12, 14)) >= 0.0);
  }
}
