#pragma once

#include <utility>

#include <span>
#include <vector>

#include "ultranerf/diff.hpp"
#include "ultranerf/frame.hpp"

namespace unerf::metrics {

/// Gaussian-windowed SSIM on unit dynamic range. Near the frame border the
/// window is truncated to in-bounds pixels and renormalized, so every pixel
/// has a local SSIM value and frames smaller than the window are supported.
struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;

  diff::Kernel2D window_kernel() const;
  /// Column and row factors whose successive application equals window_kernel().
  std::pair<diff::Kernel2D, diff::Kernel2D> separable_window() const;
  void validate() const;
};

struct LossConfig {
  double lambda = 0.9;
  SsimConfig ssim;

  void validate() const;
};

template <class T>
struct SsimResult {
  diff::Tensor<T> mean;  // scalar
  diff::Tensor<T> map;   // per-pixel SSIM, same shape as inputs
};

/// Differentiable w.r.t. `a`; `b` may be a constant.
template <class T>
SsimResult<T> ssim(const diff::Tensor<T>& a, const diff::Tensor<T>& b, const SsimConfig& cfg = {});

/// Mean squared difference.
template <class T>
diff::Tensor<T> l2(const diff::Tensor<T>& a, const diff::Tensor<T>& b);

/// lambda * (1 - SSIM) + (1 - lambda) * L2; zero iff pred == target.
template <class T>
diff::Tensor<T> combined_loss(const diff::Tensor<T>& pred, const diff::Tensor<T>& target, const LossConfig& cfg = {});

double ssim(const Frame& a, const Frame& b, const SsimConfig& cfg = {});
Frame ssim_map(const Frame& a, const Frame& b, const SsimConfig& cfg = {});
double l2(const Frame& a, const Frame& b);
double combined_loss(const Frame& pred, const Frame& target, const LossConfig& cfg = {});

struct SweepSsimStats {
  double median = 0.0;
  double mean = 0.0;
  std::vector<double> per_frame;
};

SweepSsimStats sweep_ssim_stats(std::span<const Frame> rendered, std::span<const Frame> reference,
                                const SsimConfig& cfg = {});

double median(std::vector<double> values);

/// Pearson correlation; 0 when either side is constant.
double pearson(std::span<const float> a, std::span<const float> b);

}  // namespace unerf::metrics
