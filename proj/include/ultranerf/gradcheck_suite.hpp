#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace unerf::diff {

struct GradcheckCase {
  std::string name;
  double max_error_64 = 0.0;  // worst over all points
  double max_error_32 = 0.0;
  double norm_error_32 = 0.0;  // |a - n| / |n| over the whole gradient; reported, not checked
  bool passed = false;
};

inline constexpr double kGradTol64 = 1e-5;
inline constexpr double kGradTol32 = 1e-3;

/// Checks every registered operation plus the field -> render -> loss
/// pipeline (expected sampling, 8x12 frames) at `points` random points each.
std::vector<GradcheckCase> run_gradcheck_suite(std::uint64_t seed = 1, int points = 5);

}  // namespace unerf::diff
