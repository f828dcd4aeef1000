#include "ultranerf/inr.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "ultranerf/error.hpp"

namespace unerf::inr {

void EncodingConfig::validate() const {
  if (frequencies < 0 || frequencies > 24) throw ConfigError("encoding: frequency count must be in [0, 24]");
}

void MlpConfig::validate() const {
  if (hidden_layers < 1) throw ConfigError("mlp: at least one hidden layer required");
  if (width < 1) throw ConfigError("mlp: width must be positive");
  if (input_dim < 1 || output_dim < 1) throw ConfigError("mlp: input and output widths must be positive");
  if (skip_layer < 0 || skip_layer > hidden_layers) throw ConfigError("mlp: skip layer out of range");
}

void positional_encode(std::span<const double> p, const EncodingConfig& cfg, std::span<double> out) {
  const std::size_t dims = p.size();
  const auto freqs = static_cast<std::size_t>(cfg.frequencies);
  std::size_t o = 0;
  for (std::size_t c = 0; c < dims; ++c) {
    double scale = std::numbers::pi;
    for (std::size_t l = 0; l < freqs; ++l) {
      out[o++] = std::sin(scale * p[c]);
      out[o++] = std::cos(scale * p[c]);
      scale *= 2.0;
    }
  }
  if (cfg.include_input || cfg.frequencies == 0)
    for (std::size_t c = 0; c < dims; ++c) out[o++] = p[c];
}

template <class T>
std::vector<T> encode_batch(std::span<const Vec3> points, const EncodingConfig& cfg) {
  const auto dim = static_cast<std::size_t>(cfg.encoded_dim(3));
  std::vector<T> out(points.size() * dim);
  std::vector<double> row(dim);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double p[3] = {points[i].x(), points[i].y(), points[i].z()};
    positional_encode(p, cfg, row);
    for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] = static_cast<T>(row[j]);
  }
  return out;
}

template <class T>
std::vector<T> encode_batch_1d(std::span<const double> xs, const EncodingConfig& cfg) {
  const auto dim = static_cast<std::size_t>(cfg.encoded_dim(1));
  std::vector<T> out(xs.size() * dim);
  std::vector<double> row(dim);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    positional_encode(std::span<const double>(&xs[i], 1), cfg, row);
    for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] = static_cast<T>(row[j]);
  }
  return out;
}

std::size_t layer_input_dim(const MlpConfig& cfg, int index) {
  if (index == 0) return static_cast<std::size_t>(cfg.input_dim);
  const auto w = static_cast<std::size_t>(cfg.width);
  if (index == cfg.skip_layer - 1 && index < cfg.hidden_layers) return w + static_cast<std::size_t>(cfg.input_dim);
  return w;
}

std::size_t MlpWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<float> MlpWeights::flatten() const {
  std::vector<float> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weight.begin(), l.weight.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void MlpWeights::assign(std::span<const float> flat) {
  if (flat.size() != parameter_count())
    throw ShapeError("weights: expected " + std::to_string(parameter_count()) + " values, got " +
                     std::to_string(flat.size()));
  std::size_t o = 0;
  for (auto& l : layers) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(o), l.weight.size(), l.weight.begin());
    o += l.weight.size();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(o), l.bias.size(), l.bias.begin());
    o += l.bias.size();
  }
}

MlpWeights init_weights(std::uint64_t seed, const MlpConfig& cfg) {
  cfg.validate();
  MlpWeights w{cfg, {}};
  std::mt19937_64 gen(seed);
  for (int i = 0; i <= cfg.hidden_layers; ++i) {
    LayerWeights l;
    l.rows = layer_input_dim(cfg, i);
    l.cols = static_cast<std::size_t>(i == cfg.hidden_layers ? cfg.output_dim : cfg.width);
    const double limit = std::sqrt(6.0 / static_cast<double>(l.rows + l.cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    l.weight.resize(l.rows * l.cols);
    for (auto& v : l.weight) v = static_cast<float>(dist(gen));
    l.bias.assign(l.cols, 0.0f);
    w.layers.push_back(std::move(l));
  }
  return w;
}

template <class T>
std::vector<LayerParams<T>> bind_weights(diff::Graph<T>& g, const MlpWeights& w, bool trainable) {
  std::vector<LayerParams<T>> out;
  out.reserve(w.layers.size());
  for (const auto& l : w.layers) {
    std::vector<T> wv(l.weight.begin(), l.weight.end());
    std::vector<T> bv(l.bias.begin(), l.bias.end());
    if (trainable) {
      out.push_back({g.parameter(diff::Shape{l.rows, l.cols}, std::move(wv)), g.parameter(diff::Shape{l.cols}, std::move(bv))});
    } else {
      out.push_back({g.constant(diff::Shape{l.rows, l.cols}, std::move(wv)), g.constant(diff::Shape{l.cols}, std::move(bv))});
    }
  }
  return out;
}

template <class T>
std::vector<LayerParams<T>> split_flat(const diff::Tensor<T>& flat, const MlpConfig& cfg) {
  std::vector<LayerParams<T>> out;
  std::size_t o = 0;
  for (int i = 0; i <= cfg.hidden_layers; ++i) {
    const std::size_t rows = layer_input_dim(cfg, i);
    const auto cols = static_cast<std::size_t>(i == cfg.hidden_layers ? cfg.output_dim : cfg.width);
    auto w = diff::slice(flat, o, diff::Shape{rows, cols});
    o += rows * cols;
    auto b = diff::slice(flat, o, diff::Shape{cols});
    o += cols;
    out.push_back({w, b});
  }
  if (o != flat.numel())
    throw ShapeError("split_flat: " + std::to_string(flat.numel()) + " values for " + std::to_string(o) + " parameters");
  return out;
}

template <class T>
diff::Tensor<T> mlp_forward(const MlpConfig& cfg, std::span<const LayerParams<T>> layers,
                            const diff::Tensor<T>& encoded) {
  if (layers.size() != static_cast<std::size_t>(cfg.hidden_layers + 1))
    throw ShapeError("mlp_forward: expected " + std::to_string(cfg.hidden_layers + 1) + " layers");
  auto h = encoded;
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    if (i > 0 && i == cfg.skip_layer - 1) h = diff::concat(h, encoded, 1);
    const auto& l = layers[static_cast<std::size_t>(i)];
    h = diff::relu(diff::add_bias(diff::matmul(h, l.weight), l.bias));
  }
  const auto& head = layers.back();
  return diff::add_bias(diff::matmul(h, head.weight), head.bias);
}

template <class T>
TissueTensors<T> tissue_activation(const diff::Tensor<T>& raw) {
  if (raw.shape().rank() != 2 || raw.shape()[1] != 5)
    throw ShapeError("tissue_activation: expected [N x 5], got " + raw.shape().str());
  return {diff::abs(diff::column(raw, 0)), diff::sigmoid(diff::column(raw, 1)), diff::sigmoid(diff::column(raw, 2)),
          diff::sigmoid(diff::column(raw, 3)), diff::sigmoid(diff::column(raw, 4))};
}

#define UNERF_INSTANTIATE_INR(T)                                                                               \
  template std::vector<T> encode_batch<T>(std::span<const Vec3>, const EncodingConfig&);                       \
  template std::vector<T> encode_batch_1d<T>(std::span<const double>, const EncodingConfig&);                  \
  template std::vector<LayerParams<T>> bind_weights<T>(diff::Graph<T>&, const MlpWeights&, bool);               \
  template std::vector<LayerParams<T>> split_flat<T>(const diff::Tensor<T>&, const MlpConfig&);                \
  template diff::Tensor<T> mlp_forward<T>(const MlpConfig&, std::span<const LayerParams<T>>,                   \
                                          const diff::Tensor<T>&);                                              \
  template TissueTensors<T> tissue_activation<T>(const diff::Tensor<T>&);

UNERF_INSTANTIATE_INR(float)
UNERF_INSTANTIATE_INR(double)
UNERF_INSTANTIATE_INR(long double)

}  // namespace unerf::inr
