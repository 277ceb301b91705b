#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace hykey::geometry {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// 3x3 projective map, stored with m(2,2) == 1 whenever that entry is nonzero.
struct Homography {
  Mat3 m = Mat3::Identity();

  static Homography identity() { return {}; }
  static Homography from_matrix(const Mat3& m);
  Homography inverse() const;
  std::array<double, 9> row_major() const;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const;
  Mat3 inverse() const;
};

struct RelativePose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

struct FundamentalMatrix {
  Mat3 m = Mat3::Zero();

  std::array<double, 9> row_major() const;
};

struct Correspondence {
  Vec2 p0 = Vec2::Zero();
  Vec2 p1 = Vec2::Zero();
  double similarity = 0.0;
};
using CorrespondenceSet = std::vector<Correspondence>;

Vec2 apply_homography(const Homography& h, const Vec2& p);

// Mean displacement of the four image corners (0,0), (w-1,0), (w-1,h-1),
// (0,h-1) between two homographies.
double mean_corner_error(const Homography& estimated, const Homography& truth, int width, int height);

Mat3 skew(const Vec3& v);

// F02 = K2^-T [t]x R K0^-1, Frobenius-normalised. Throws kDegenerateMotion for
// a translation shorter than 1e-9.
FundamentalMatrix compose_fundamental(const Intrinsics& k0, const Intrinsics& k2, const RelativePose& pose);

// (p1' F p0)^2 / ((F p0)_1^2 + (F p0)_2^2 + (F' p1)_1^2 + (F' p1)_2^2).
double sampson_distance(const Mat3& f, const Vec2& p0, const Vec2& p1);

// Pixel coordinates premultiplied by K^-1 and rescaled by a common focal
// length, so distances stay commensurate with pixels.
struct NormalisedFrame {
  Intrinsics k0;
  Intrinsics k2;
  double focal = 1.0;

  NormalisedFrame(const Intrinsics& a, const Intrinsics& b);
  Vec2 view0(const Vec2& px) const;
  Vec2 view2(const Vec2& px) const;
  // Transforms mapping pixels (homogeneous) to normalised pixels.
  Mat3 to_normalised0() const;
  Mat3 to_normalised2() const;
};

Mat3 essential_from_fundamental(const FundamentalMatrix& f, const Intrinsics& k0, const Intrinsics& k2);

// Picks the (R, +-t) factorisation with the most correspondences in front of
// both cameras. Matches are pixel coordinates; the translation is returned as
// a unit vector. Throws kCheiralityAmbiguity when no match disambiguates.
RelativePose decompose_essential(const Mat3& e, const CorrespondenceSet& matches, const Intrinsics& k0,
                                 const Intrinsics& k2);

double rotation_angle_deg(const Mat3& r);
double direction_angle_deg(const Vec3& a, const Vec3& b);

// max(rotation error, translation direction error) in degrees; the
// translation term is dropped when the ground-truth baseline is below 1e-9.
double pose_angular_error(const RelativePose& estimated, const RelativePose& truth);

Mat3 rotation_from_axis_angle(const Vec3& axis, double angle_rad);

}  // namespace hykey::geometry
