#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hykey/geometry.hpp"

namespace hykey::geometry {

struct RobustOptions {
  double threshold = 1.0;
  double confidence = 0.99999;
  int max_iterations = 10000;
  int local_optimisation_steps = 5;
  std::uint64_t seed = 0;
};

template <class Model>
struct RobustFit {
  Model model;
  std::vector<std::uint8_t> inliers;
  int inlier_count = 0;
  int iterations = 0;
  // Inlier count after the initial hypothesis and each accepted local
  // optimisation step of the final model.
  std::vector<int> local_optimisation_history;
};

using HomographyFit = RobustFit<Homography>;
using FundamentalFit = RobustFit<FundamentalMatrix>;

// Normalised DLT least squares over every correspondence (>= 4). Returns
// nullopt for degenerate configurations.
std::optional<Homography> fit_homography_dlt(const CorrespondenceSet& matches);

// Hartley-normalised (optionally weighted) 8-point fit with rank-2 projection.
std::optional<FundamentalMatrix> fit_fundamental_8point(const CorrespondenceSet& matches,
                                                        std::span<const double> weights = {});

// LO-RANSAC with MSAC scoring on forward reprojection error (px). nullopt when
// fewer than 4 matches or no model reaches 4 inliers.
std::optional<HomographyFit> estimate_homography_robust(const CorrespondenceSet& matches, const RobustOptions& options);

// Matches are converted to normalised pixels (see NormalisedFrame) before the
// Sampson threshold applies; the returned F maps pixel coordinates. Scoring
// marginalises MSAC weights over sigma in {1/8, 1/4, 1/2, 1} x threshold.
std::optional<FundamentalFit> estimate_fundamental_robust(const CorrespondenceSet& matches, const Intrinsics& k0,
                                                          const Intrinsics& k2, const RobustOptions& options);

// Robust F, essential matrix, and cheirality-resolved decomposition on the
// inliers; nullopt when any stage fails.
std::optional<RelativePose> recover_relative_pose(const CorrespondenceSet& matches, const Intrinsics& k0,
                                                  const Intrinsics& k2, const RobustOptions& options);

}  // namespace hykey::geometry
