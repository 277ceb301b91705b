#include "hykey/metrics.hpp"

#include <cmath>

#include "hykey/error.hpp"

namespace hykey::metrics {

using geometry::Vec2;
using geometry::Vec3;

double auc(const Curve& v) {
  double area = 0.0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    area += 0.5 * (v[i] + v[i - 1]) * (kPixelThresholds[i] - kPixelThresholds[i - 1]);
  }
  return area / (kPixelThresholds.back() - kPixelThresholds.front());
}

std::array<double, 3> maa(const std::vector<double>& errors) {
  std::array<double, 3> out{};
  if (errors.empty()) return out;
  for (std::size_t t = 0; t < kAngleThresholds.size(); ++t) {
    std::size_t hits = 0;
    for (double e : errors) hits += e < kAngleThresholds[t] ? 1 : 0;
    out[t] = static_cast<double>(hits) / static_cast<double>(errors.size());
  }
  return out;
}

namespace {

// Maps p through h and tests it against the target extents and mask.
bool lands_valid(const Vec2& p, const geometry::Mat3& h, int height, int width, const std::vector<std::uint8_t>* mask) {
  const Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
  if (std::abs(q.z()) <= 1e-12) return false;
  const Vec2 t = q.hnormalized();
  if (!(t.x() >= 0.0 && t.y() >= 0.0 && t.x() <= width - 1 && t.y() <= height - 1)) return false;
  if (mask == nullptr) return true;
  const auto x = static_cast<std::size_t>(std::lround(t.x()));
  const auto y = static_cast<std::size_t>(std::lround(t.y()));
  return (*mask)[y * static_cast<std::size_t>(width) + x] != 0;
}

bool has_neighbour(const Vec2& p, const std::vector<Vec2>& pts, const std::vector<std::size_t>& subset, double tau) {
  for (auto j : subset) {
    if ((pts[j] - p).norm() < tau) return true;
  }
  return false;
}

}  // namespace

std::vector<std::size_t> covisible0(const std::vector<Vec2>& kpts0, const PlanarGeometry& g) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kpts0.size(); ++i) {
    if (lands_valid(kpts0[i], g.h01.m, g.height1, g.width1, g.valid1)) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> covisible1(const std::vector<Vec2>& kpts1, const PlanarGeometry& g) {
  const geometry::Mat3 inv = g.h01.m.inverse();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kpts1.size(); ++i) {
    if (lands_valid(kpts1[i], inv, g.height0, g.width0, g.valid0)) out.push_back(i);
  }
  return out;
}

std::optional<double> repeatability(const std::vector<Vec2>& kpts0, const std::vector<Vec2>& kpts1,
                                    const PlanarGeometry& g, double tau, RepeatabilityDenominator denominator) {
  const auto c0 = covisible0(kpts0, g);
  const auto c1 = covisible1(kpts1, g);
  if (c0.empty() || c1.empty()) return std::nullopt;
  const auto inv = g.h01.inverse();
  std::size_t hits = 0;
  for (auto i : c0) hits += has_neighbour(geometry::apply_homography(g.h01, kpts0[i]), kpts1, c1, tau) ? 1 : 0;
  for (auto j : c1) hits += has_neighbour(geometry::apply_homography(inv, kpts1[j]), kpts0, c0, tau) ? 1 : 0;
  if (denominator == RepeatabilityDenominator::kSum) {
    return static_cast<double>(hits) / static_cast<double>(c0.size() + c1.size());
  }
  return std::min(1.0, 0.5 * static_cast<double>(hits) / static_cast<double>(std::min(c0.size(), c1.size())));
}

namespace {

std::size_t count_correct(const geometry::CorrespondenceSet& matches, const geometry::Homography& h, double tau) {
  std::size_t n = 0;
  for (const auto& m : matches) n += (geometry::apply_homography(h, m.p0) - m.p1).norm() < tau ? 1 : 0;
  return n;
}

}  // namespace

std::optional<double> matching_score(const geometry::CorrespondenceSet& matches, const geometry::Homography& h01,
                                     double tau, std::size_t cov0, std::size_t cov1) {
  const std::size_t den = std::min(cov0, cov1);
  if (den == 0) return std::nullopt;
  return std::min(1.0, static_cast<double>(count_correct(matches, h01, tau)) / static_cast<double>(den));
}

std::optional<double> mma(const geometry::CorrespondenceSet& matches, const geometry::Homography& h01, double tau) {
  if (matches.empty()) return std::nullopt;
  return static_cast<double>(count_correct(matches, h01, tau)) / static_cast<double>(matches.size());
}

double homography_corner_error(const geometry::CorrespondenceSet& matches, const geometry::Homography& h_gt,
                               int width, int height, const geometry::RobustOptions& options) {
  const auto fit = geometry::estimate_homography_robust(matches, options);
  if (!fit) return std::numeric_limits<double>::infinity();
  try {
    return geometry::mean_corner_error(fit->model, h_gt, width, height);
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

double mha(double corner_error, double tau) { return corner_error < tau ? 1.0 : 0.0; }

PlanarPairMetrics evaluate_planar_pair(const PlanarPairInput& in, const EvalOptions& options) {
  PlanarPairMetrics out;
  out.id = in.id;
  out.keypoints0 = in.kpts0.size();
  out.keypoints1 = in.kpts1.size();
  out.covisible0 = covisible0(in.kpts0, in.geometry).size();
  out.covisible1 = covisible1(in.kpts1, in.geometry).size();
  out.matches = in.matches.size();
  out.corner_error = homography_corner_error(in.matches, in.geometry.h01, in.geometry.width0, in.geometry.height0,
                                             options.homography);
  for (std::size_t t = 0; t < kPixelThresholds.size(); ++t) {
    const double tau = kPixelThresholds[t];
    out.rep[t] = repeatability(in.kpts0, in.kpts1, in.geometry, tau, options.repeatability_denominator);
    out.ms[t] = matching_score(in.matches, in.geometry.h01, tau, out.covisible0, out.covisible1);
    out.mma[t] = mma(in.matches, in.geometry.h01, tau);
    out.mha[t] = mha(out.corner_error, tau);
  }
  return out;
}

namespace {

CurveSummary summarise(const std::vector<PlanarPairMetrics>& pairs, OptionalCurve PlanarPairMetrics::*field) {
  CurveSummary s;
  for (const auto& p : pairs) {
    const auto& c = p.*field;
    if (!c[0]) {
      ++s.excluded;
      continue;
    }
    ++s.included;
    for (std::size_t t = 0; t < c.size(); ++t) s.values[t] += *c[t];
  }
  if (s.included > 0) {
    for (double& v : s.values) v /= static_cast<double>(s.included);
  }
  s.auc = auc(s.values);
  return s;
}

}  // namespace

PlanarSummary summarise_planar(const std::vector<PlanarPairMetrics>& pairs) {
  PlanarSummary s;
  s.rep = summarise(pairs, &PlanarPairMetrics::rep);
  s.ms = summarise(pairs, &PlanarPairMetrics::ms);
  s.mma = summarise(pairs, &PlanarPairMetrics::mma);
  for (const auto& p : pairs) {
    for (std::size_t t = 0; t < p.mha.size(); ++t) s.mha.values[t] += p.mha[t];
  }
  s.mha.included = pairs.size();
  if (!pairs.empty()) {
    for (double& v : s.mha.values) v /= static_cast<double>(pairs.size());
  }
  s.mha.auc = auc(s.mha.values);
  return s;
}

PosePairMetrics evaluate_pose_pair(std::string id, const geometry::CorrespondenceSet& matches,
                                   const geometry::Intrinsics& k0, const geometry::Intrinsics& k2,
                                   const geometry::RelativePose& truth, const EvalOptions& options) {
  PosePairMetrics out;
  out.id = std::move(id);
  out.matches = matches.size();
  const auto fit = geometry::estimate_fundamental_robust(matches, k0, k2, options.fundamental);
  if (!fit) return out;
  out.inliers = static_cast<std::size_t>(fit->inlier_count);
  geometry::CorrespondenceSet inliers;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (fit->inliers[i]) inliers.push_back(matches[i]);
  }
  try {
    const auto e = geometry::essential_from_fundamental(fit->model, k0, k2);
    const auto pose = geometry::decompose_essential(e, inliers, k0, k2);
    out.pose_error_deg = geometry::pose_angular_error(pose, truth);
  } catch (const Error&) {
    out.pose_error_deg = std::numeric_limits<double>::infinity();
  }
  return out;
}

PoseSummary summarise_pose(const std::vector<PosePairMetrics>& pairs) {
  PoseSummary s;
  std::vector<double> errors;
  for (const auto& p : pairs) {
    errors.push_back(p.pose_error_deg);
    if (!std::isfinite(p.pose_error_deg)) ++s.failures;
  }
  s.maa = maa(errors);
  s.pairs = pairs.size();
  return s;
}

}  // namespace hykey::metrics
