#pragma once

// Coordinate network: sin/cos positional encoding followed by a ReLU MLP with
// a skip connection, mapping a normalized 3D position to tissue parameters.

#include <cstdint>
#include <span>
#include <vector>

#include "ultranerf/diff.hpp"
#include "ultranerf/geometry.hpp"

namespace unerf::inr {

struct EncodingConfig {
  int frequencies = 10;        // L; 0 feeds raw coordinates
  bool include_input = false;  // append raw coordinates after the sin/cos terms

  /// Encoded width for `coord_dims` input coordinates.
  int encoded_dim(int coord_dims = 3) const {
    int d = 2 * frequencies * coord_dims;
    if (include_input || frequencies == 0) d += coord_dims;
    return d;
  }
  void validate() const;
  bool operator==(const EncodingConfig&) const = default;
};

/// Writes (sin(2^l pi p_c), cos(2^l pi p_c)) for every coordinate c and
/// l = 0..L-1, coordinate-major; raw coordinates follow when requested.
void positional_encode(std::span<const double> p, const EncodingConfig& cfg, std::span<double> out);

/// Encodes a batch of points into an [N x encoded_dim] row-major array.
template <class T>
std::vector<T> encode_batch(std::span<const Vec3> points, const EncodingConfig& cfg);

/// Encodes N scalar coordinates (1D signal fitting).
template <class T>
std::vector<T> encode_batch_1d(std::span<const double> xs, const EncodingConfig& cfg);

struct MlpConfig {
  int hidden_layers = 8;
  int width = 256;
  int skip_layer = 5;  // 1-based hidden layer whose input is concat(activation, encoded input)
  int input_dim = 60;
  int output_dim = 5;

  void validate() const;
  bool operator==(const MlpConfig&) const = default;
};

struct LayerWeights {
  std::size_t rows = 0;  // fan-in
  std::size_t cols = 0;  // fan-out
  std::vector<float> weight;  // rows x cols, row-major
  std::vector<float> bias;    // cols
};

/// Weights for hidden_layers ReLU layers plus one linear head.
struct MlpWeights {
  MlpConfig config;
  std::vector<LayerWeights> layers;

  std::size_t parameter_count() const;
  std::vector<float> flatten() const;
  void assign(std::span<const float> flat);
};

/// Input width of 0-based layer `index` (the head is index hidden_layers).
std::size_t layer_input_dim(const MlpConfig& cfg, int index);

/// Uniform +-sqrt(6 / (fan_in + fan_out)) weights and zero biases, determined by seed.
MlpWeights init_weights(std::uint64_t seed, const MlpConfig& cfg);

template <class T>
struct LayerParams {
  diff::Tensor<T> weight;
  diff::Tensor<T> bias;
};

/// Leaves for every layer; trainable ones when `trainable` is set.
template <class T>
std::vector<LayerParams<T>> bind_weights(diff::Graph<T>& g, const MlpWeights& w, bool trainable);

/// Views a flat parameter vector (in flatten() order) as layer tensors.
template <class T>
std::vector<LayerParams<T>> split_flat(const diff::Tensor<T>& flat, const MlpConfig& cfg);

/// Raw MLP output [N x output_dim] (no output activation).
template <class T>
diff::Tensor<T> mlp_forward(const MlpConfig& cfg, std::span<const LayerParams<T>> layers,
                            const diff::Tensor<T>& encoded);

/// Five tissue parameter columns, each shaped [N].
template <class T>
struct TissueTensors {
  diff::Tensor<T> alpha;          // >= 0, |x|
  diff::Tensor<T> beta;           // reflectance, sigmoid
  diff::Tensor<T> border;         // border probability, sigmoid
  diff::Tensor<T> density;        // scattering density, sigmoid
  diff::Tensor<T> amplitude;      // scattering intensity, sigmoid
};

/// Applies |x| to channel 0 and the logistic function to channels 1..4.
template <class T>
TissueTensors<T> tissue_activation(const diff::Tensor<T>& raw);

}  // namespace unerf::inr
