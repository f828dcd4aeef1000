#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fit1d.hpp"
#include "ultranerf/inr.hpp"

using namespace unerf;
using namespace unerf::inr;

namespace {

/// Plain nested-loop forward pass in double.
std::vector<double> mlp_oracle(const MlpWeights& w, const std::vector<double>& x) {
  const auto& cfg = w.config;
  std::vector<double> h = x;
  auto dense = [](const LayerWeights& l, const std::vector<double>& in, bool relu) {
    std::vector<double> out(l.cols);
    for (std::size_t j = 0; j < l.cols; ++j) {
      double acc = l.bias[j];
      for (std::size_t i = 0; i < l.rows; ++i) acc += in[i] * l.weight[i * l.cols + j];
      out[j] = relu ? std::max(acc, 0.0) : acc;
    }
    return out;
  };
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    if (i > 0 && i == cfg.skip_layer - 1) h.insert(h.end(), x.begin(), x.end());
    h = dense(w.layers[static_cast<std::size_t>(i)], h, true);
  }
  return dense(w.layers.back(), h, false);
}

MlpConfig small_config(int input_dim) {
  MlpConfig c;
  c.hidden_layers = 8;
  c.width = 16;
  c.skip_layer = 5;
  c.input_dim = input_dim;
  c.output_dim = 5;
  return c;
}

void randomize_biases(MlpWeights& w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.3f, 0.3f);
  for (auto& l : w.layers)
    for (auto& b : l.bias) b = u(rng);
}

}  // namespace

TEST_CASE("encoding of the origin alternates zero and one") {
  EncodingConfig cfg{2, false};
  std::vector<double> p{0, 0, 0}, out(12);
  positional_encode(p, cfg, out);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == (i % 2 == 0 ? 0.0 : 1.0));
}

TEST_CASE("encoded width") {
  CHECK(EncodingConfig{10, false}.encoded_dim(3) == 60);
  CHECK(EncodingConfig{10, false}.encoded_dim(1) == 20);
  CHECK(EncodingConfig{4, true}.encoded_dim(3) == 27);
  CHECK(EncodingConfig{0, false}.encoded_dim(3) == 3);
}

TEST_CASE("encoding matches the sin/cos formula") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  EncodingConfig cfg{10, false};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p{u(rng), u(rng), u(rng)}, out(60), again(60);
    positional_encode(p, cfg, out);
    positional_encode(p, cfg, again);
    CHECK(out == again);
    for (int c = 0; c < 3; ++c) {
      for (int l = 0; l < 10; ++l) {
        const double arg = std::ldexp(1.0, l) * std::numbers::pi * p[static_cast<std::size_t>(c)];
        CHECK(out[static_cast<std::size_t>(c * 20 + 2 * l)] == doctest::Approx(std::sin(arg)).epsilon(1e-12));
        CHECK(out[static_cast<std::size_t>(c * 20 + 2 * l + 1)] == doctest::Approx(std::cos(arg)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("L = 0 passes raw coordinates; include_input appends them") {
  std::vector<double> p{0.25, -0.5, 0.75};
  std::vector<double> raw(3);
  positional_encode(p, EncodingConfig{0, false}, raw);
  CHECK(raw == p);
  std::vector<double> with(9);
  positional_encode(p, EncodingConfig{1, true}, with);
  CHECK(with[6] == 0.25);
  CHECK(with[7] == -0.5);
  CHECK(with[8] == 0.75);
}

TEST_CASE("init_weights is seed-deterministic with Glorot bounds") {
  const auto cfg = small_config(60);
  const auto a = init_weights(9, cfg);
  const auto b = init_weights(9, cfg);
  const auto c = init_weights(10, cfg);
  CHECK(a.flatten() == b.flatten());
  CHECK(a.flatten() != c.flatten());
  REQUIRE(a.layers.size() == 9);
  for (int i = 0; i < 9; ++i) {
    const auto& l = a.layers[static_cast<std::size_t>(i)];
    CHECK(l.rows == layer_input_dim(cfg, i));
    const double limit = std::sqrt(6.0 / static_cast<double>(l.rows + l.cols));
    for (float v : l.weight) CHECK(std::abs(v) <= limit);
    for (float v : l.bias) CHECK(v == 0.0f);
  }
  CHECK(a.layers[4].rows == 16 + 60);
  CHECK(a.layers[0].rows == 60);
  CHECK(a.layers[3].rows == 16);
  CHECK(a.layers[8].cols == 5);
}

TEST_CASE("flatten and assign round-trip") {
  auto w = init_weights(1, small_config(12));
  auto flat = w.flatten();
  CHECK(flat.size() == w.parameter_count());
  for (auto& v : flat) v *= 2.0f;
  w.assign(flat);
  CHECK(w.flatten() == flat);
  flat.pop_back();
  CHECK_THROWS_AS(w.assign(flat), ShapeError);
}

TEST_CASE("mlp_forward matches a nested-loop oracle") {
  const EncodingConfig enc{3, false};
  auto w = init_weights(4, small_config(enc.encoded_dim(3)));
  randomize_biases(w, 5);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 7; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  const auto enc_rows = encode_batch<double>(pts, enc);
  const auto dim = static_cast<std::size_t>(enc.encoded_dim(3));

  diff::Graph<double> g(false);
  auto layers = bind_weights(g, w, false);
  auto out = mlp_forward(w.config, std::span<const LayerParams<double>>(layers), g.constant(diff::Shape{7, dim}, enc_rows));
  REQUIRE(out.shape() == diff::Shape{7, 5});
  for (std::size_t i = 0; i < 7; ++i) {
    std::vector<double> x(enc_rows.begin() + static_cast<std::ptrdiff_t>(i * dim),
                          enc_rows.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    const auto ref = mlp_oracle(w, x);
    for (std::size_t c = 0; c < 5; ++c) CHECK(out.values()[i * 5 + c] == doctest::Approx(ref[c]).epsilon(1e-12));
  }
}

TEST_CASE("field outputs respect tissue ranges") {
  auto w = init_weights(11, small_config(60));
  randomize_biases(w, 12);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 10000; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  diff::Graph<float> g(false);
  auto layers = bind_weights(g, w, false);
  auto raw = mlp_forward(w.config, std::span<const LayerParams<float>>(layers),
                         g.constant(diff::Shape{pts.size(), 60}, encode_batch<float>(pts, EncodingConfig{})));
  auto t = tissue_activation(raw);
  for (float v : t.alpha.values()) CHECK(v >= 0.0f);
  for (const auto* m : {&t.beta, &t.border, &t.density, &t.amplitude})
    for (float v : m->values()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("queries are view independent and batch independent") {
  auto w = init_weights(21, small_config(60));
  randomize_biases(w, 22);
  std::vector<Vec3> pts{{0.1, 0.2, 0.3}, {-0.4, 0.5, -0.6}, {0.7, -0.8, 0.9}};
  auto run = [&](const std::vector<Vec3>& p) {
    diff::Graph<double> g(false);
    auto layers = bind_weights(g, w, false);
    auto out = mlp_forward(w.config, std::span<const LayerParams<double>>(layers),
                           g.constant(diff::Shape{p.size(), 60}, encode_batch<double>(p, EncodingConfig{})));
    return std::vector<double>(out.values().begin(), out.values().end());
  };
  const auto all = run(pts);
  const auto reversed = run({pts[2], pts[1], pts[0]});
  const auto single = run({pts[1]});
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(all[5 + c] == single[c]);
    CHECK(all[c] == reversed[10 + c]);
    CHECK(all[10 + c] == reversed[c]);
  }
}

TEST_CASE("field query gradient w.r.t. weights") {
  MlpConfig cfg{8, 6, 5, 6, 5};
  auto w = init_weights(31, cfg);
  randomize_biases(w, 32);
  const EncodingConfig enc{1, false};
  std::vector<Vec3> pts{{0.1, -0.2, 0.3}, {0.5, 0.4, -0.7}};
  const auto flat = w.flatten();
  std::vector<double> point(flat.begin(), flat.end());
  auto f = [&](auto& g, auto x) {
    using T = typename std::remove_reference_t<decltype(g.value(0))>::value_type;
    auto layers = split_flat(x, cfg);
    auto raw = mlp_forward(cfg, std::span<const LayerParams<T>>(layers),
                           g.constant(diff::Shape{2, 6}, encode_batch<T>(pts, enc)));
    auto t = tissue_activation(raw);
    return diff::sum(t.alpha) + diff::sum(t.beta) + diff::sum(t.border) + diff::sum(t.density) + diff::sum(t.amplitude);
  };
  CHECK(diff::gradcheck<double>(f, point, 1e-5) < 1e-5);
  CHECK(diff::gradcheck<float>(f, point, 1e-5) < 1e-3);
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS((EncodingConfig{-1, false}.validate()), ConfigError);
  MlpConfig bad = small_config(60);
  bad.skip_layer = 9;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_config(60);
  bad.width = 0;
  CHECK_THROWS_AS(init_weights(0, bad), ConfigError);
}

TEST_CASE("encoding lets the network fit a high-frequency 1D signal") {
  const auto with = fit1d::fit(10, 400, 4);
  const auto without = fit1d::fit(0, 400, 4);
  MESSAGE("L=10 " << with.final_loss << ", L=0 " << without.final_loss);
  CHECK(with.final_loss < without.final_loss);
  CHECK(with.losses.front() > with.final_loss);
}
