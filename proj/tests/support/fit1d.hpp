#pragma once

// Full-batch fit of a coordinate MLP to a fixed 1D signal.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "ultranerf/inr.hpp"

namespace fit1d {

struct Result {
  double final_loss = 0.0;
  std::vector<double> losses;
};

inline double target(double x) {
  return 0.5 + 0.25 * std::sin(12.0 * std::numbers::pi * x) + 0.15 * std::sin(40.0 * std::numbers::pi * x);
}

inline Result fit(int frequencies, int iterations, std::uint64_t seed, std::size_t samples = 256) {
  using namespace unerf;
  std::vector<double> xs(samples), ys(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    xs[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(samples - 1);
    ys[i] = target(xs[i]);
  }
  inr::EncodingConfig enc{frequencies, false};
  const inr::MlpConfig cfg{4, 64, 3, enc.encoded_dim(1), 1};
  auto weights = inr::init_weights(seed, cfg);
  const auto encoded = inr::encode_batch_1d<float>(xs, enc);
  const std::vector<float> y(ys.begin(), ys.end());

  std::vector<float> params = weights.flatten(), m(params.size(), 0.0f), v(params.size(), 0.0f);
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Result r;
  auto loss_of = [&](diff::Graph<float>& g, std::vector<inr::LayerParams<float>>& layers) {
    auto x = g.constant(diff::Shape{samples, static_cast<std::size_t>(cfg.input_dim)}, std::span<const float>(encoded));
    auto out = diff::reshape(inr::mlp_forward(cfg, std::span<const inr::LayerParams<float>>(layers), x),
                             diff::Shape{samples});
    auto d = out - g.constant(diff::Shape{samples}, std::span<const float>(y));
    return diff::mean(d * d);
  };
  for (int it = 0; it < iterations; ++it) {
    diff::Graph<float> g;
    auto layers = inr::bind_weights(g, weights, true);
    auto loss = loss_of(g, layers);
    r.losses.push_back(static_cast<double>(loss.item()));
    auto grads = g.backward(loss);
    std::vector<float> flat;
    for (const auto& l : layers) {
      auto gw = grads.of(l.weight), gb = grads.of(l.bias);
      flat.insert(flat.end(), gw.begin(), gw.end());
      flat.insert(flat.end(), gb.begin(), gb.end());
    }
    const double c1 = 1.0 - std::pow(b1, it + 1), c2 = 1.0 - std::pow(b2, it + 1);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * flat[i]);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * flat[i] * flat[i]);
      params[i] -= static_cast<float>(lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps));
    }
    weights.assign(params);
  }
  diff::Graph<float> g(false);
  auto layers = inr::bind_weights(g, weights, false);
  r.final_loss = static_cast<double>(loss_of(g, layers).item());
  return r;
}

}  // namespace fit1d
