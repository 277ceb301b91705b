#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hykey/geometry.hpp"
#include "hykey/robust.hpp"

namespace hykey::metrics {

inline constexpr std::array<double, 5> kPixelThresholds{1.0, 3.0, 5.0, 10.0, 20.0};
inline constexpr std::array<double, 3> kAngleThresholds{5.0, 10.0, 20.0};

using Curve = std::array<double, 5>;
using OptionalCurve = std::array<std::optional<double>, 5>;

// Normalised trapezoidal area of the metric-vs-tau curve over [1, 20].
double auc(const Curve& values);

// Fraction of errors strictly below each threshold; failures are +inf.
std::array<double, 3> maa(const std::vector<double>& pose_errors_deg);

enum class RepeatabilityDenominator { kSum, kMin };

// Image extents and optional validity masks (row-major, 1 = valid) of a pair
// related by h01.
struct PlanarGeometry {
  geometry::Homography h01;
  int height0 = 0, width0 = 0;
  int height1 = 0, width1 = 0;
  const std::vector<std::uint8_t>* valid0 = nullptr;
  const std::vector<std::uint8_t>* valid1 = nullptr;
};

// Keypoints of view 0 whose projection lands on a valid pixel of view 1
// (covisible0) and vice versa.
std::vector<std::size_t> covisible0(const std::vector<geometry::Vec2>& kpts0, const PlanarGeometry& g);
std::vector<std::size_t> covisible1(const std::vector<geometry::Vec2>& kpts1, const PlanarGeometry& g);

// nullopt when no keypoint is covisible.
std::optional<double> repeatability(const std::vector<geometry::Vec2>& kpts0, const std::vector<geometry::Vec2>& kpts1,
                                    const PlanarGeometry& g, double tau,
                                    RepeatabilityDenominator denominator = RepeatabilityDenominator::kSum);

// Correct matches (reprojection error < tau) over min(covisible counts).
std::optional<double> matching_score(const geometry::CorrespondenceSet& matches, const geometry::Homography& h01,
                                     double tau, std::size_t covisible_count0, std::size_t covisible_count1);

// Correct matches over all matches.
std::optional<double> mma(const geometry::CorrespondenceSet& matches, const geometry::Homography& h01, double tau);

// Corner error of the robustly estimated homography (+inf on failure).
double homography_corner_error(const geometry::CorrespondenceSet& matches, const geometry::Homography& h_gt,
                               int width, int height, const geometry::RobustOptions& options);
// 1 when the corner error is below tau.
double mha(double corner_error, double tau);

struct EvalOptions {
  geometry::RobustOptions homography{3.0, 0.99999, 10000, 5, 0};
  geometry::RobustOptions fundamental{1.0, 0.99999, 10000, 5, 0};
  RepeatabilityDenominator repeatability_denominator = RepeatabilityDenominator::kSum;
};

struct PlanarPairInput {
  std::string id;
  std::vector<geometry::Vec2> kpts0, kpts1;
  geometry::CorrespondenceSet matches;
  PlanarGeometry geometry;
};

struct PlanarPairMetrics {
  std::string id;
  OptionalCurve rep, ms, mma;
  Curve mha{};
  std::size_t keypoints0 = 0, keypoints1 = 0, covisible0 = 0, covisible1 = 0, matches = 0;
  double corner_error = std::numeric_limits<double>::infinity();
};

PlanarPairMetrics evaluate_planar_pair(const PlanarPairInput& input, const EvalOptions& options);

struct CurveSummary {
  Curve values{};
  double auc = 0.0;
  std::size_t included = 0;  // pairs contributing to the mean
  std::size_t excluded = 0;  // pairs where the metric is undefined
};

struct PlanarSummary {
  CurveSummary rep, ms, mma, mha;
};

PlanarSummary summarise_planar(const std::vector<PlanarPairMetrics>& pairs);

struct PosePairMetrics {
  std::string id;
  std::size_t matches = 0;
  std::size_t inliers = 0;
  double pose_error_deg = std::numeric_limits<double>::infinity();
};

PosePairMetrics evaluate_pose_pair(std::string id, const geometry::CorrespondenceSet& matches,
                                   const geometry::Intrinsics& k0, const geometry::Intrinsics& k2,
                                   const geometry::RelativePose& truth, const EvalOptions& options);

struct PoseSummary {
  std::array<double, 3> maa{};
  std::size_t pairs = 0;
  std::size_t failures = 0;
};

PoseSummary summarise_pose(const std::vector<PosePairMetrics>& pairs);

}  // namespace hykey::metrics
