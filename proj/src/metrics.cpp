#include "ultranerf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ultranerf/error.hpp"

namespace unerf::metrics {

diff::Kernel2D SsimConfig::window_kernel() const {
  const auto n = static_cast<std::size_t>(window);
  diff::Kernel2D k{n, n, std::vector<double>(n * n)};
  const double h = static_cast<double>(n / 2);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double dr = static_cast<double>(r) - h, dc = static_cast<double>(c) - h;
      const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      k.weights[r * n + c] = v;
      total += v;
    }
  }
  for (auto& v : k.weights) v /= total;
  return k;
}

std::pair<diff::Kernel2D, diff::Kernel2D> SsimConfig::separable_window() const {
  const auto n = static_cast<std::size_t>(window);
  std::vector<double> w(n);
  const double h = static_cast<double>(n / 2);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - h;
    w[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return {diff::Kernel2D{n, 1, w}, diff::Kernel2D{1, n, w}};
}

void SsimConfig::validate() const {
  if (window < 1 || window % 2 == 0) throw ConfigError("ssim window must be a positive odd size");
  if (!(sigma > 0.0)) throw ConfigError("ssim sigma must be positive");
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("ssim stabilizers must be positive");
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  ssim.validate();
}

namespace {

void require_same(const diff::Shape& a, const diff::Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace

template <class T>
SsimResult<T> ssim(const diff::Tensor<T>& a, const diff::Tensor<T>& b, const SsimConfig& cfg) {
  require_same(a.shape(), b.shape(), "ssim");
  if (a.shape().rank() != 2) throw ShapeError("ssim: expected a 2D image, got " + a.shape().str());
  cfg.validate();
  auto& g = a.graph();
  const auto [kcol, krow] = cfg.separable_window();
  auto window = [&](const diff::Tensor<T>& x) { return diff::conv2d_same(diff::conv2d_same(x, kcol), krow); };

  // Reciprocal of the in-bounds window mass per pixel.
  std::vector<T> norm(a.numel());
  {
    diff::Graph<T> scratch(false);
    auto mass = diff::conv2d_same(diff::conv2d_same(scratch.full(a.shape(), T(1)), kcol), krow);
    auto mv = mass.values();
    for (std::size_t i = 0; i < norm.size(); ++i) norm[i] = T(1) / mv[i];
  }
  auto inv_mass = g.constant(a.shape(), std::move(norm));
  auto local = [&](const diff::Tensor<T>& x) { return window(x) * inv_mass; };

  auto mu_a = local(a);
  auto mu_b = local(b);
  auto mu_aa = mu_a * mu_a;
  auto mu_bb = mu_b * mu_b;
  auto mu_ab = mu_a * mu_b;
  auto var_a = local(a * a) - mu_aa;
  auto var_b = local(b * b) - mu_bb;
  auto cov = local(a * b) - mu_ab;

  const T c1 = static_cast<T>(cfg.c1), c2 = static_cast<T>(cfg.c2);
  auto num = diff::affine(mu_ab, T(2), c1) * diff::affine(cov, T(2), c2);
  auto den = diff::affine(mu_aa + mu_bb, T(1), c1) * diff::affine(var_a + var_b, T(1), c2);
  auto map = num / den;
  return {diff::mean(map), map};
}

template <class T>
diff::Tensor<T> l2(const diff::Tensor<T>& a, const diff::Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "l2");
  auto d = a - b;
  return diff::mean(d * d);
}

template <class T>
diff::Tensor<T> combined_loss(const diff::Tensor<T>& pred, const diff::Tensor<T>& target, const LossConfig& cfg) {
  require_same(pred.shape(), target.shape(), "combined_loss");
  cfg.validate();
  const T lam = static_cast<T>(cfg.lambda);
  auto structural = diff::affine(ssim(pred, target, cfg.ssim).mean, -lam, lam);
  if (cfg.lambda == 1.0) return structural;
  return structural + diff::affine(l2(pred, target), T(1) - lam);
}

namespace {

diff::Shape frame_shape(const Frame& f) { return diff::Shape{f.width, f.depth}; }

void require_same_frames(const Frame& a, const Frame& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch [" + std::to_string(a.width) + "x" + std::to_string(a.depth) +
                     "] vs [" + std::to_string(b.width) + "x" + std::to_string(b.depth) + "]");
}

}  // namespace

double ssim(const Frame& a, const Frame& b, const SsimConfig& cfg) {
  require_same_frames(a, b, "ssim");
  diff::Graph<double> g(false);
  auto ta = g.constant(frame_shape(a), std::span<const float>(a.values));
  auto tb = g.constant(frame_shape(b), std::span<const float>(b.values));
  return ssim(ta, tb, cfg).mean.item();
}

Frame ssim_map(const Frame& a, const Frame& b, const SsimConfig& cfg) {
  require_same_frames(a, b, "ssim");
  diff::Graph<double> g(false);
  auto ta = g.constant(frame_shape(a), std::span<const float>(a.values));
  auto tb = g.constant(frame_shape(b), std::span<const float>(b.values));
  auto m = ssim(ta, tb, cfg).map.values();
  Frame out(a.width, a.depth);
  for (std::size_t i = 0; i < m.size(); ++i) out.values[i] = static_cast<float>(m[i]);
  return out;
}

double l2(const Frame& a, const Frame& b) {
  require_same_frames(a, b, "l2");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    s += d * d;
  }
  return a.values.empty() ? 0.0 : s / static_cast<double>(a.values.size());
}

double combined_loss(const Frame& pred, const Frame& target, const LossConfig& cfg) {
  require_same_frames(pred, target, "combined_loss");
  cfg.validate();
  return cfg.lambda * (1.0 - ssim(pred, target, cfg.ssim)) + (1.0 - cfg.lambda) * l2(pred, target);
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

SweepSsimStats sweep_ssim_stats(std::span<const Frame> rendered, std::span<const Frame> reference,
                                const SsimConfig& cfg) {
  if (rendered.size() != reference.size())
    throw ShapeError("sweep_ssim_stats: " + std::to_string(rendered.size()) + " rendered frames vs " +
                     std::to_string(reference.size()) + " reference frames");
  SweepSsimStats st;
  for (std::size_t i = 0; i < rendered.size(); ++i) st.per_frame.push_back(ssim(rendered[i], reference[i], cfg));
  st.median = median(st.per_frame);
  st.mean = st.per_frame.empty()
                ? 0.0
                : std::accumulate(st.per_frame.begin(), st.per_frame.end(), 0.0) / static_cast<double>(st.per_frame.size());
  return st;
}

double pearson(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: length mismatch");
  const auto n = static_cast<double>(a.size());
  if (a.empty()) return 0.0;
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

#define UNERF_INSTANTIATE_METRICS(T)                                                                          \
  template SsimResult<T> ssim<T>(const diff::Tensor<T>&, const diff::Tensor<T>&, const SsimConfig&);          \
  template diff::Tensor<T> l2<T>(const diff::Tensor<T>&, const diff::Tensor<T>&);                              \
  template diff::Tensor<T> combined_loss<T>(const diff::Tensor<T>&, const diff::Tensor<T>&, const LossConfig&);

UNERF_INSTANTIATE_METRICS(float)
UNERF_INSTANTIATE_METRICS(double)
UNERF_INSTANTIATE_METRICS(long double)

}  // namespace unerf::metrics
