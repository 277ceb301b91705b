#include "hykey/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "hykey/error.hpp"

namespace hykey::geometry {

namespace {
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
}

Homography Homography::from_matrix(const Mat3& m) {
  if (std::abs(m.determinant()) <= 1e-10 * std::max(1.0, std::pow(m.norm(), 3))) {
    fail(ErrorCode::kUsage, "singular homography");
  }
  Homography h;
  h.m = m;
  if (m(2, 2) != 0.0) h.m /= m(2, 2);
  return h;
}

Homography Homography::inverse() const { return from_matrix(m.inverse()); }

std::array<double, 9> Homography::row_major() const {
  return {m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1), m(2, 2)};
}

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 Intrinsics::inverse() const {
  Mat3 k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

std::array<double, 9> FundamentalMatrix::row_major() const {
  return {m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1), m(2, 2)};
}

Vec2 apply_homography(const Homography& h, const Vec2& p) {
  const Vec3 q = h.m * Vec3(p.x(), p.y(), 1.0);
  if (std::abs(q.z()) <= 1e-12) fail(ErrorCode::kPointAtInfinity, "homography maps point to infinity");
  return {q.x() / q.z(), q.y() / q.z()};
}

double mean_corner_error(const Homography& estimated, const Homography& truth, int width, int height) {
  const double w = width - 1.0;
  const double h = height - 1.0;
  const std::array<Vec2, 4> corners{Vec2(0, 0), Vec2(w, 0), Vec2(w, h), Vec2(0, h)};
  double total = 0.0;
  for (const auto& c : corners) total += (apply_homography(estimated, c) - apply_homography(truth, c)).norm();
  return total / 4.0;
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

FundamentalMatrix compose_fundamental(const Intrinsics& k0, const Intrinsics& k2, const RelativePose& pose) {
  if (pose.translation.norm() <= 1e-9) fail(ErrorCode::kDegenerateMotion, "zero translation has no epipolar geometry");
  FundamentalMatrix f;
  f.m = k2.inverse().transpose() * skew(pose.translation) * pose.rotation * k0.inverse();
  f.m /= f.m.norm();
  return f;
}

double sampson_distance(const Mat3& f, const Vec2& p0, const Vec2& p1) {
  const Vec3 x0(p0.x(), p0.y(), 1.0);
  const Vec3 x1(p1.x(), p1.y(), 1.0);
  const Vec3 a = f * x0;
  const Vec3 b = f.transpose() * x1;
  const double num = x1.dot(a);
  const double den = a.x() * a.x() + a.y() * a.y() + b.x() * b.x() + b.y() * b.y();
  if (den < 1e-18) fail(ErrorCode::kEpipoleDegenerate, "sampson denominator vanishes at the epipole");
  return num * num / den;
}

NormalisedFrame::NormalisedFrame(const Intrinsics& a, const Intrinsics& b)
    : k0(a), k2(b), focal((a.fx + a.fy + b.fx + b.fy) / 4.0) {}

Mat3 NormalisedFrame::to_normalised0() const { return Eigen::Vector3d(focal, focal, 1.0).asDiagonal() * k0.inverse(); }

Mat3 NormalisedFrame::to_normalised2() const { return Eigen::Vector3d(focal, focal, 1.0).asDiagonal() * k2.inverse(); }

Vec2 NormalisedFrame::view0(const Vec2& px) const {
  return {focal * (px.x() - k0.cx) / k0.fx, focal * (px.y() - k0.cy) / k0.fy};
}

Vec2 NormalisedFrame::view2(const Vec2& px) const {
  return {focal * (px.x() - k2.cx) / k2.fx, focal * (px.y() - k2.cy) / k2.fy};
}

Mat3 essential_from_fundamental(const FundamentalMatrix& f, const Intrinsics& k0, const Intrinsics& k2) {
  const Mat3 e = k2.matrix().transpose() * f.m * k0.matrix();
  Eigen::JacobiSVD<Mat3> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * Eigen::Vector3d(1.0, 1.0, 0.0).asDiagonal() * svd.matrixV().transpose();
}

namespace {

// Depths of the linear two-view triangulation of normalised rays x0, x2 under
// X2 = R X0 + t.
std::pair<double, double> triangulate_depths(const Mat3& r, const Vec3& t, const Vec3& x0, const Vec3& x2) {
  Eigen::Matrix<double, 4, 4> a;
  Eigen::Matrix<double, 3, 4> p0 = Eigen::Matrix<double, 3, 4>::Zero();
  p0.block<3, 3>(0, 0) = Mat3::Identity();
  Eigen::Matrix<double, 3, 4> p2;
  p2.block<3, 3>(0, 0) = r;
  p2.col(3) = t;
  a.row(0) = x0.x() * p0.row(2) - p0.row(0);
  a.row(1) = x0.y() * p0.row(2) - p0.row(1);
  a.row(2) = x2.x() * p2.row(2) - p2.row(0);
  a.row(3) = x2.y() * p2.row(2) - p2.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  Eigen::Vector4d xh = svd.matrixV().col(3);
  if (std::abs(xh(3)) < 1e-14) return {-1.0, -1.0};
  const Vec3 x = xh.head<3>() / xh(3);
  return {x.z(), (r * x + t).z()};
}

}  // namespace

RelativePose decompose_essential(const Mat3& e, const CorrespondenceSet& matches, const Intrinsics& k0,
                                 const Intrinsics& k2) {
  Eigen::JacobiSVD<Mat3> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if (u.determinant() < 0) u.col(2) *= -1.0;
  if (v.determinant() < 0) v.col(2) *= -1.0;
  Mat3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const std::array<Mat3, 2> rotations{u * w * v.transpose(), u * w.transpose() * v.transpose()};
  const Vec3 t = u.col(2).normalized();
  const Mat3 k0i = k0.inverse();
  const Mat3 k2i = k2.inverse();

  int best_count = 0;
  int best_index = -1;
  RelativePose best;
  int index = 0;
  for (const auto& r : rotations) {
    for (double sign : {1.0, -1.0}) {
      const Vec3 tc = sign * t;
      int count = 0;
      for (const auto& m : matches) {
        const Vec3 x0 = k0i * Vec3(m.p0.x(), m.p0.y(), 1.0);
        const Vec3 x2 = k2i * Vec3(m.p1.x(), m.p1.y(), 1.0);
        const auto [z0, z2] = triangulate_depths(r, tc, x0, x2);
        if (z0 > 0.0 && z2 > 0.0) ++count;
      }
      if (count > best_count) {
        best_count = count;
        best_index = index;
        best.rotation = r;
        best.translation = tc;
      }
      ++index;
    }
  }
  if (best_index < 0) {
    fail(ErrorCode::kCheiralityAmbiguity, "no correspondence lies in front of both cameras");
  }
  return best;
}

double rotation_angle_deg(const Mat3& r) {
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (r.trace() - 1.0)) * kRadToDeg;
}

double direction_angle_deg(const Vec3& a, const Vec3& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 180.0;
  return std::atan2(a.cross(b).norm(), a.dot(b)) * kRadToDeg;
}

double pose_angular_error(const RelativePose& estimated, const RelativePose& truth) {
  const double rot = rotation_angle_deg(estimated.rotation * truth.rotation.transpose());
  if (truth.translation.norm() < 1e-9) return rot;
  return std::max(rot, direction_angle_deg(estimated.translation, truth.translation));
}

Mat3 rotation_from_axis_angle(const Vec3& axis, double angle_rad) {
  if (axis.norm() == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

}  // namespace hykey::geometry
