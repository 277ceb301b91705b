#include <doctest.h>

#include <cmath>
#include <limits>

#include "hykey/metrics.hpp"

using namespace hykey;
using namespace hykey::metrics;
using geometry::Homography;
using geometry::Vec2;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Independent piecewise-linear integration by dense midpoint sampling.
double integrate_curve(const Curve& v) {
  const int steps = 190000;
  double area = 0.0;
  for (int s = 0; s < steps; ++s) {
    const double tau = 1.0 + (s + 0.5) * 19.0 / steps;
    std::size_t k = 0;
    while (k + 2 < kPixelThresholds.size() && tau > kPixelThresholds[k + 1]) ++k;
    const double a = kPixelThresholds[k], b = kPixelThresholds[k + 1];
    area += (v[k] + (v[k + 1] - v[k]) * (tau - a) / (b - a)) * 19.0 / steps;
  }
  return area / 19.0;
}

PlanarGeometry square_geometry(int size, Homography h = {}) {
  PlanarGeometry g;
  g.h01 = h;
  g.height0 = g.width0 = g.height1 = g.width1 = size;
  return g;
}

Homography translation(double dx, double dy) {
  Homography h;
  h.m(0, 2) = dx;
  h.m(1, 2) = dy;
  return h;
}

geometry::CorrespondenceSet exact_matches(const Homography& h, int n) {
  geometry::CorrespondenceSet out;
  for (int i = 0; i < n; ++i) {
    const Vec2 p(5.0 + 7.0 * (i % 8), 6.0 + 9.0 * (i / 8) + 0.3 * (i % 3));
    out.push_back({p, geometry::apply_homography(h, p), 1.0});
  }
  return out;
}

}  // namespace

TEST_CASE("AUC is the normalised trapezoid over [1, 20]") {
  CHECK(auc({1, 1, 1, 1, 1}) == doctest::Approx(1.0));
  CHECK(auc({0, 0, 0, 0, 0}) == doctest::Approx(0.0));
  const Curve v{0, 0.5, 0.5, 1, 1};
  CHECK(auc(v) == doctest::Approx(integrate_curve(v)).epsilon(1e-6));
  CHECK(auc(v) == doctest::Approx(15.25 / 19.0));
  const Curve a{0.1, 0.2, 0.4, 0.6, 0.9}, b{0.3, 0.3, 0.2, 0.5, 0.1};
  Curve mix;
  for (int i = 0; i < 5; ++i) mix[i] = 2.0 * a[i] + 3.0 * b[i];
  CHECK(auc(mix) == doctest::Approx(2.0 * auc(a) + 3.0 * auc(b)));
}

TEST_CASE("mAA counts strictly smaller errors; failures never count") {
  const auto m = maa({3, 8, 15, 25});
  CHECK(m[0] == doctest::Approx(0.25));
  CHECK(m[1] == doctest::Approx(0.5));
  CHECK(m[2] == doctest::Approx(0.75));
  CHECK(maa({0, 0})[0] == 1.0);
  CHECK(maa({kInf, kInf})[2] == 0.0);
  CHECK(maa({5.0})[0] == 0.0);
  CHECK(maa({5.0})[1] == 1.0);
}

TEST_CASE("repeatability counting") {
  const auto g = square_geometry(100);
  std::vector<Vec2> k0, k1;
  for (int i = 0; i < 10; ++i) {
    const Vec2 p(10.0 * i + 2.0, 50.0);
    k0.push_back(p);
    k1.push_back(p + Vec2(i < 7 ? 0.5 : 4.0, 0.0));
  }
  CHECK(*repeatability(k0, k1, g, 3.0) == doctest::Approx(0.7));
  CHECK(*repeatability(k0, k1, g, 5.0) == doctest::Approx(1.0));
  CHECK(*repeatability(k0, k0, g, 1.0) == doctest::Approx(1.0));

  std::vector<Vec2> shifted;
  for (const auto& p : k0) shifted.push_back(p + Vec2(0.0, 4.0));
  CHECK(*repeatability(k0, shifted, g, 3.0) == 0.0);

  // Only covisible keypoints count: a translation pushes some off the target.
  const auto moved = square_geometry(100, translation(60.0, 0.0));
  std::vector<Vec2> k1m{{10.0, 50.0}, {30.0, 50.0}};  // sources left of image 0
  for (const auto& p : k0)
    if (p.x() + 60.0 < 100.0) k1m.push_back(p + Vec2(60.0, 0.0));
  CHECK(covisible0(k0, moved).size() == 4);
  CHECK(covisible1(k1m, moved).size() == 4);
  CHECK(*repeatability(k0, k1m, moved, 1.0) == doctest::Approx(1.0));
  CHECK_FALSE(repeatability({}, {}, g, 3.0).has_value());
}

TEST_CASE("validity masks restrict covisibility") {
  auto g = square_geometry(10);
  std::vector<std::uint8_t> mask(100, 1);
  mask[5 * 10 + 5] = 0;
  g.valid1 = &mask;
  const std::vector<Vec2> k{{5.0, 5.0}, {2.0, 2.0}};
  CHECK(covisible0(k, g).size() == 1);
}

TEST_CASE("matching score and MMA counting") {
  const Homography h = translation(2.0, -1.0);
  auto m = exact_matches(h, 20);
  for (int i = 12; i < 20; ++i) m[i].p1 += Vec2(6.0, 0.0);
  CHECK(*matching_score(m, h, 3.0, 25, 20) == doctest::Approx(0.6));
  CHECK(*mma(m, h, 3.0) == doctest::Approx(0.6));
  CHECK(*matching_score({}, h, 3.0, 25, 20) == 0.0);
  CHECK_FALSE(mma({}, h, 3.0).has_value());
  CHECK_FALSE(matching_score(m, h, 3.0, 0, 20).has_value());

  auto half = exact_matches(h, 10);
  for (int i = 0; i < 5; ++i) half[i].p1 += Vec2(0.0, 2.0 * 3.0);
  CHECK(*mma(half, h, 3.0) == doctest::Approx(0.5));
  CHECK(*mma(exact_matches(h, 10), h, 1.0) == 1.0);
}

TEST_CASE("MHA thresholds the robust corner error") {
  const Homography truth = translation(3.0, 1.0);
  geometry::RobustOptions o;
  o.threshold = 3.0;
  CHECK(homography_corner_error(exact_matches(truth, 20), truth, 64, 64, o) < 1e-6);
  // Matches consistent with a homography offset by 7 px from the truth.
  const Homography off = translation(3.0 + 7.0, 1.0);
  const double err = homography_corner_error(exact_matches(off, 20), truth, 64, 64, o);
  CHECK(err == doctest::Approx(7.0).epsilon(1e-6));
  CHECK(mha(err, 5.0) == 0.0);
  CHECK(mha(err, 10.0) == 1.0);
  CHECK(homography_corner_error(exact_matches(truth, 3), truth, 64, 64, o) == kInf);
  CHECK(mha(kInf, 20.0) == 0.0);
}

TEST_CASE("self-pair sanity and aggregation") {
  PlanarPairInput self;
  self.id = "self";
  for (int i = 0; i < 20; ++i) self.kpts0.push_back(Vec2(3.0 + 2.9 * i, 4.0 + 2.7 * ((i * 7) % 20)));
  self.kpts1 = self.kpts0;
  for (const auto& p : self.kpts0) self.matches.push_back({p, p, 1.0});
  self.geometry = square_geometry(64);
  const auto a = evaluate_planar_pair(self, {});
  for (int t = 0; t < 5; ++t) {
    CHECK(*a.rep[t] == doctest::Approx(1.0));
    CHECK(*a.mma[t] == doctest::Approx(1.0));
    CHECK(*a.ms[t] == doctest::Approx(1.0));
    CHECK(a.mha[t] == 1.0);
  }

  PlanarPairInput empty = self;
  empty.id = "no-matches";
  empty.matches.clear();
  const auto b = evaluate_planar_pair(empty, {});
  CHECK_FALSE(b.mma[0].has_value());
  CHECK(b.mha[4] == 0.0);

  const auto s = summarise_planar({a, b});
  CHECK(s.mma.included == 1);
  CHECK(s.mma.excluded == 1);
  CHECK(s.mma.values[0] == doctest::Approx(1.0));
  CHECK(s.ms.values[0] == doctest::Approx(0.5));
  CHECK(s.mha.values[4] == doctest::Approx(0.5));
  CHECK(s.rep.auc == doctest::Approx(1.0));
  const auto swapped = summarise_planar({b, a});
  CHECK(swapped.ms.auc == s.ms.auc);
  // Curves are non-decreasing in tau.
  for (int t = 1; t < 5; ++t) CHECK(s.mha.values[t] >= s.mha.values[t - 1]);
}

TEST_CASE("pose evaluation and summary") {
  const geometry::Intrinsics k{460, 460, 255.5, 135.5};
  geometry::RelativePose truth;
  truth.translation = geometry::Vec3(1, 0, 0);
  geometry::CorrespondenceSet m;
  for (int i = 0; i < 40; ++i) {
    const geometry::Vec3 x(-4.0 + 0.2 * i, -2.0 + 0.1 * ((i * 13) % 40), 10.0 + (i % 5));
    m.push_back({(k.matrix() * x).hnormalized(), (k.matrix() * (x + truth.translation)).hnormalized(), 1.0});
  }
  const auto good = evaluate_pose_pair("good", m, k, k, truth, {});
  CHECK(good.pose_error_deg < 0.5);
  CHECK(good.matches == 40);
  const auto failed = evaluate_pose_pair("failed", {m.begin(), m.begin() + 5}, k, k, truth, {});
  CHECK(failed.pose_error_deg == kInf);
  const auto s = summarise_pose({good, failed});
  CHECK(s.pairs == 2);
  CHECK(s.failures == 1);
  CHECK(s.maa[0] == doctest::Approx(0.5));
}
