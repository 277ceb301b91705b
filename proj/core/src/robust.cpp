#include "hykey/robust.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "hykey/error.hpp"

namespace hykey::geometry {

namespace {

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

struct Normaliser {
  Mat3 t = Mat3::Identity();
  bool ok = false;
};

template <class Get>
Normaliser hartley(std::size_t n, Get get, std::span<const double> weights = {}) {
  Normaliser out;
  if (n == 0) return out;
  Vec2 centroid = Vec2::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    centroid += w * get(i);
    total += w;
  }
  if (total <= 0.0) return out;
  centroid /= total;
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    spread += w * (get(i) - centroid).norm();
  }
  spread /= total;
  if (spread < 1e-12) return out;
  const double s = std::sqrt(2.0) / spread;
  out.t << s, 0.0, -s * centroid.x(), 0.0, s, -s * centroid.y(), 0.0, 0.0, 1.0;
  out.ok = true;
  return out;
}

Vec2 transform(const Mat3& t, const Vec2& p) { return {t(0, 0) * p.x() + t(0, 2), t(1, 1) * p.y() + t(1, 2)}; }

Vec9 smallest_eigenvector(const Mat9& ata) {
  Eigen::SelfAdjointEigenSolver<Mat9> eig(ata);
  return eig.eigenvectors().col(0);
}

std::optional<Homography> dlt_subset(const CorrespondenceSet& matches, std::span<const int> idx) {
  auto p0 = [&](std::size_t i) { return matches[idx[i]].p0; };
  auto p1 = [&](std::size_t i) { return matches[idx[i]].p1; };
  const auto n0 = hartley(idx.size(), p0);
  const auto n1 = hartley(idx.size(), p1);
  if (!n0.ok || !n1.ok) return std::nullopt;
  Mat9 ata = Mat9::Zero();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Vec2 a = transform(n0.t, p0(i));
    const Vec2 b = transform(n1.t, p1(i));
    Vec9 r1, r2;
    r1 << -a.x(), -a.y(), -1.0, 0.0, 0.0, 0.0, b.x() * a.x(), b.x() * a.y(), b.x();
    r2 << 0.0, 0.0, 0.0, -a.x(), -a.y(), -1.0, b.y() * a.x(), b.y() * a.y(), b.y();
    ata.noalias() += r1 * r1.transpose() + r2 * r2.transpose();
  }
  // A second (near-)null direction means the points do not pin H down, e.g. three collinear.
  Eigen::SelfAdjointEigenSolver<Mat9> eig(ata);
  if (eig.eigenvalues()(1) <= 1e-12 * eig.eigenvalues()(8)) return std::nullopt;
  const Vec9 h = eig.eigenvectors().col(0);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Mat3 m = n1.t.inverse() * hn * n0.t;
  if (!m.allFinite() || std::abs(m(2, 2)) < 1e-12) return std::nullopt;
  const Mat3 scaled = m / m(2, 2);
  if (std::abs(scaled.determinant()) < 1e-10) return std::nullopt;
  Homography out;
  out.m = scaled;
  return out;
}

std::optional<FundamentalMatrix> eight_point_subset(const CorrespondenceSet& matches, std::span<const int> idx,
                                                    std::span<const double> weights) {
  auto p0 = [&](std::size_t i) { return matches[idx[i]].p0; };
  auto p1 = [&](std::size_t i) { return matches[idx[i]].p1; };
  const auto n0 = hartley(idx.size(), p0, weights);
  const auto n1 = hartley(idx.size(), p1, weights);
  if (!n0.ok || !n1.ok) return std::nullopt;
  Mat9 ata = Mat9::Zero();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w <= 0.0) continue;
    const Vec2 a = transform(n0.t, p0(i));
    const Vec2 b = transform(n1.t, p1(i));
    Vec9 r;
    r << b.x() * a.x(), b.x() * a.y(), b.x(), b.y() * a.x(), b.y() * a.y(), b.y(), a.x(), a.y(), 1.0;
    ata.noalias() += w * (r * r.transpose());
  }
  const Vec9 f = smallest_eigenvector(ata);
  Mat3 fn;
  fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);
  Eigen::JacobiSVD<Mat3> svd(fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = svd.singularValues();
  s(2) = 0.0;
  fn = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  FundamentalMatrix out;
  out.m = n1.t.transpose() * fn * n0.t;
  const double norm = out.m.norm();
  if (!out.m.allFinite() || norm < 1e-15) return std::nullopt;
  out.m /= norm;
  return out;
}

// Generic LO-RANSAC driver. Problem provides:
//   sample_size, count()
//   minimal(span<const int>) -> optional<Model>
//   residual(const Model&, int) -> double (distance, same unit as threshold)
//   weight(residual) -> double in [0,1] (MSAC-style quality contribution)
//   refit(const CorrespondenceSet subset ...) via refit(residuals) -> optional<Model>
template <class Model, class Problem>
std::optional<RobustFit<Model>> lo_ransac(Problem& problem, const RobustOptions& options) {
  const int n = problem.count();
  const int s = problem.sample_size;
  if (n < s) return std::nullopt;

  std::mt19937_64 rng(options.seed);
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<double> residuals(static_cast<std::size_t>(n));

  struct Scored {
    Model model;
    double quality = -1.0;
    int inliers = 0;
  };
  auto score = [&](const Model& m) {
    Scored sc{m, 0.0, 0};
    for (int i = 0; i < n; ++i) {
      const double r = problem.residual(m, i);
      residuals[i] = r;
      sc.quality += problem.weight(r);
      if (r < options.threshold) ++sc.inliers;
    }
    return sc;
  };
  auto local_optimise = [&](Scored current, std::vector<int>& history) {
    history.assign(1, current.inliers);
    for (int step = 0; step < options.local_optimisation_steps; ++step) {
      score(current.model);  // refresh residuals for the refit
      auto cand = problem.refit(residuals);
      if (!cand) break;
      auto next = score(*cand);
      if (next.quality > current.quality && next.inliers >= current.inliers) {
        current = next;
        history.push_back(current.inliers);
      } else {
        break;
      }
    }
    return current;
  };

  Scored best;
  std::vector<int> best_history;
  const double log_fail = std::log(std::max(1e-300, 1.0 - options.confidence));
  int needed = options.max_iterations;
  int it = 0;
  std::vector<int> sample(static_cast<std::size_t>(s));
  for (; it < needed && it < options.max_iterations; ++it) {
    for (int k = 0; k < s; ++k) {
      std::uniform_int_distribution<int> pick(k, n - 1);
      std::swap(pool[k], pool[pick(rng)]);
      sample[k] = pool[k];
    }
    auto model = problem.minimal(sample);
    if (!model) continue;
    auto sc = score(*model);
    if (sc.quality <= best.quality) continue;
    std::vector<int> history;
    sc = local_optimise(sc, history);
    if (sc.quality > best.quality) {
      best = sc;
      best_history = std::move(history);
      const double ratio = static_cast<double>(best.inliers) / n;
      const double p_good = std::pow(ratio, s);
      if (p_good >= 1.0 - 1e-15) {
        needed = it + 1;
      } else if (p_good > 0.0) {
        const double est = log_fail / std::log(1.0 - p_good);
        needed = static_cast<int>(std::min<double>(options.max_iterations, std::ceil(est)));
      }
    }
  }
  if (best.quality < 0.0 || best.inliers < s) return std::nullopt;

  // Final least-squares refit on the consensus set.
  score(best.model);
  if (auto refined = problem.refit(residuals)) {
    auto sc = score(*refined);
    if (sc.quality >= best.quality && sc.inliers >= best.inliers) {
      best = sc;
      best_history.push_back(best.inliers);
    }
  }
  score(best.model);
  RobustFit<Model> fit;
  fit.model = best.model;
  fit.inliers.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) fit.inliers[i] = residuals[i] < options.threshold ? 1 : 0;
  fit.inlier_count = best.inliers;
  fit.iterations = it;
  fit.local_optimisation_history = std::move(best_history);
  return fit;
}

struct HomographyProblem {
  const CorrespondenceSet& matches;
  double threshold;
  int sample_size = 4;

  int count() const { return static_cast<int>(matches.size()); }
  std::optional<Homography> minimal(std::span<const int> idx) const { return dlt_subset(matches, idx); }
  double residual(const Homography& h, int i) const {
    const auto& m = matches[i];
    const Vec3 q = h.m * Vec3(m.p0.x(), m.p0.y(), 1.0);
    if (std::abs(q.z()) < 1e-12) return std::numeric_limits<double>::infinity();
    return (Vec2(q.x() / q.z(), q.y() / q.z()) - m.p1).norm();
  }
  double weight(double r) const { return std::max(0.0, 1.0 - (r * r) / (threshold * threshold)); }
  std::optional<Homography> refit(const std::vector<double>& residuals) const {
    std::vector<int> idx;
    for (int i = 0; i < count(); ++i)
      if (residuals[i] < threshold) idx.push_back(i);
    if (idx.size() < 4) return std::nullopt;
    return dlt_subset(matches, idx);
  }
};

constexpr std::array<double, 4> kSigmaGrid{0.125, 0.25, 0.5, 1.0};

struct FundamentalProblem {
  const CorrespondenceSet& matches;  // normalised pixels
  double threshold;
  int sample_size = 8;

  int count() const { return static_cast<int>(matches.size()); }
  std::optional<FundamentalMatrix> minimal(std::span<const int> idx) const {
    return eight_point_subset(matches, idx, {});
  }
  double residual(const FundamentalMatrix& f, int i) const {
    const auto& m = matches[i];
    const Vec3 x0(m.p0.x(), m.p0.y(), 1.0);
    const Vec3 x1(m.p1.x(), m.p1.y(), 1.0);
    const Vec3 a = f.m * x0;
    const Vec3 b = f.m.transpose() * x1;
    const double den = a.x() * a.x() + a.y() * a.y() + b.x() * b.x() + b.y() * b.y();
    if (den < 1e-18) return std::numeric_limits<double>::infinity();
    const double num = x1.dot(a);
    return std::abs(num) / std::sqrt(den);
  }
  double weight(double r) const {
    double w = 0.0;
    for (double k : kSigmaGrid) {
      const double sigma = k * threshold;
      w += std::max(0.0, 1.0 - (r * r) / (sigma * sigma));
    }
    return w / static_cast<double>(kSigmaGrid.size());
  }
  std::optional<FundamentalMatrix> refit(const std::vector<double>& residuals) const {
    std::vector<int> idx;
    std::vector<double> weights;
    for (int i = 0; i < count(); ++i) {
      const double w = weight(residuals[i]);
      if (w > 0.0) {
        idx.push_back(i);
        weights.push_back(w);
      }
    }
    if (idx.size() < 8) return std::nullopt;
    return eight_point_subset(matches, idx, weights);
  }
};

}  // namespace

std::optional<Homography> fit_homography_dlt(const CorrespondenceSet& matches) {
  if (matches.size() < 4) return std::nullopt;
  std::vector<int> idx(matches.size());
  std::iota(idx.begin(), idx.end(), 0);
  return dlt_subset(matches, idx);
}

std::optional<FundamentalMatrix> fit_fundamental_8point(const CorrespondenceSet& matches,
                                                        std::span<const double> weights) {
  if (matches.size() < 8) return std::nullopt;
  if (!weights.empty() && weights.size() != matches.size()) fail(ErrorCode::kDimension, "weight count mismatch");
  std::vector<int> idx(matches.size());
  std::iota(idx.begin(), idx.end(), 0);
  return eight_point_subset(matches, idx, weights);
}

std::optional<HomographyFit> estimate_homography_robust(const CorrespondenceSet& matches, const RobustOptions& options) {
  if (matches.size() < 4) return std::nullopt;
  HomographyProblem problem{matches, options.threshold};
  return lo_ransac<Homography>(problem, options);
}

std::optional<FundamentalFit> estimate_fundamental_robust(const CorrespondenceSet& matches, const Intrinsics& k0,
                                                          const Intrinsics& k2, const RobustOptions& options) {
  if (matches.size() < 8) return std::nullopt;
  const NormalisedFrame frame(k0, k2);
  CorrespondenceSet normalised;
  normalised.reserve(matches.size());
  for (const auto& m : matches) normalised.push_back({frame.view0(m.p0), frame.view2(m.p1), m.similarity});
  FundamentalProblem problem{normalised, options.threshold};
  auto fit = lo_ransac<FundamentalMatrix>(problem, options);
  if (!fit) return std::nullopt;
  Mat3 f = frame.to_normalised2().transpose() * fit->model.m * frame.to_normalised0();
  f /= f.norm();
  fit->model.m = f;
  return fit;
}

std::optional<RelativePose> recover_relative_pose(const CorrespondenceSet& matches, const Intrinsics& k0,
                                                  const Intrinsics& k2, const RobustOptions& options) {
  auto fit = estimate_fundamental_robust(matches, k0, k2, options);
  if (!fit) return std::nullopt;
  CorrespondenceSet inliers;
  for (std::size_t i = 0; i < matches.size(); ++i)
    if (fit->inliers[i]) inliers.push_back(matches[i]);
  try {
    const Mat3 e = essential_from_fundamental(fit->model, k0, k2);
    return decompose_essential(e, inliers, k0, k2);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace hykey::geometry
