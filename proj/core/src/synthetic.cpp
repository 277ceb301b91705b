#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "detail/random.hpp"
#include "hykey/error.hpp"
#include "hykey/hsidata.hpp"

namespace hykey::hsi {

using geometry::Homography;
using geometry::Mat3;
using geometry::Vec2;
using geometry::Vec3;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser over the combined words
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SyntheticPairSpec SyntheticPairSpec::identity(PairMode mode) {
  SyntheticPairSpec s;
  s.mode = mode;
  s.gain_min = s.gain_max = 1.0;
  s.gamma_min = s.gamma_max = 1.0;
  s.noise_std = 0.0;
  s.band_gain_min = s.band_gain_max = 1.0;
  s.rotation_deg = 0.0;
  s.scale_min = s.scale_max = 1.0;
  s.translation_frac = 0.0;
  s.perspective = 0.0;
  s.baseline_min = s.baseline_max = 0.0;
  s.view_rotation_deg = 0.0;
  return s;
}

void SyntheticPairSpec::validate() const {
  auto range = [](double lo, double hi, const char* name) {
    if (!(lo >= 0.0 && hi >= lo)) fail(ErrorCode::kConfig, std::string("invalid range for ") + name);
  };
  range(gain_min, gain_max, "gain");
  range(gamma_min, gamma_max, "gamma");
  range(band_gain_min, band_gain_max, "band_gain");
  range(scale_min, scale_max, "scale");
  range(baseline_min, baseline_max, "baseline");
  if (scale_min <= 0.0) fail(ErrorCode::kConfig, "scale range must exclude 0");
  if (gamma_min <= 0.0) fail(ErrorCode::kConfig, "gamma range must exclude 0");
  if (noise_std < 0 || rotation_deg < 0 || translation_frac < 0 || perspective < 0 || view_rotation_deg < 0 ||
      relief < 0 || relief >= 1.0) {
    fail(ErrorCode::kConfig, "synthetic ranges must be non-negative (relief below 1)");
  }
  if (bands < 4 || height < 8 || width < 8) fail(ErrorCode::kConfig, "synthetic cubes need >= 4 bands and >= 8 px");
}

namespace {

// Catmull-Rom interpolation of evenly spaced control values onto n samples.
std::vector<float> spline(const std::vector<double>& ctrl, int n) {
  std::vector<float> out(static_cast<std::size_t>(n));
  const int m = static_cast<int>(ctrl.size());
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) * (m - 1) / (n - 1);
    const int k = std::min(static_cast<int>(t), m - 2);
    const double f = t - k;
    auto c = [&](int j) { return ctrl[std::clamp(j, 0, m - 1)]; };
    const double p0 = c(k - 1), p1 = c(k), p2 = c(k + 1), p3 = c(k + 2);
    const double v = 0.5 * (2 * p1 + (-p0 + p2) * f + (2 * p0 - 5 * p1 + 4 * p2 - p3) * f * f +
                            (-p0 + 3 * p1 - 3 * p2 + p3) * f * f * f);
    out[i] = static_cast<float>(v);
  }
  return out;
}

std::vector<float> random_spline(detail::Rng& rng, int controls, double lo, double hi, int n) {
  std::vector<double> ctrl(static_cast<std::size_t>(controls));
  for (double& c : ctrl) c = rng.uniform(lo, hi);
  return spline(ctrl, n);
}

constexpr double kEdgeSoftness = 0.004;

float bilinear(const HsiCube& cube, int b, double x, double y) {
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, std::max(cube.width - 2, 0));
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, std::max(cube.height - 2, 0));
  const int x1 = std::min(x0 + 1, cube.width - 1);
  const int y1 = std::min(y0 + 1, cube.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double v = (1 - fy) * ((1 - fx) * cube.at(b, y0, x0) + fx * cube.at(b, y0, x1)) +
                   fy * ((1 - fx) * cube.at(b, y1, x0) + fx * cube.at(b, y1, x1));
  return static_cast<float>(v);
}

bool inside(const Vec2& p, int height, int width) {
  constexpr double eps = 1e-9;
  return p.x() >= -eps && p.y() >= -eps && p.x() <= width - 1 + eps && p.y() <= height - 1 + eps;
}

// Same gain and gamma for all bands, a smooth per-band gain, additive noise;
// only pixels flagged valid are touched.
void apply_jitter(HsiCube& cube, const SyntheticPairSpec& spec, std::uint64_t seed,
                  const std::vector<std::uint8_t>* valid) {
  detail::Rng rng(seed);
  const double gain = rng.uniform(spec.gain_min, spec.gain_max);
  const double gamma = rng.uniform(spec.gamma_min, spec.gamma_max);
  const double noise = rng.uniform(0.0, spec.noise_std);
  const auto band_gain = random_spline(rng, 4, spec.band_gain_min, spec.band_gain_max, cube.bands);
  const std::size_t plane = static_cast<std::size_t>(cube.height) * cube.width;
  for (int b = 0; b < cube.bands; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      if (valid != nullptr && !(*valid)[i]) continue;
      float& v = cube.data[b * plane + i];
      double out = band_gain[b] * gain * std::pow(static_cast<double>(v), gamma);
      if (noise > 0.0) out += noise * rng.normal();
      v = static_cast<float>(std::clamp(out, 0.0, 1.0));
    }
  }
}

int region_count(double visible_area_px, double visible_fraction) {
  return std::clamp(static_cast<int>(visible_area_px / 48.0 / visible_fraction), 8, 512);
}

}  // namespace

SpectralTexture::SpectralTexture(std::uint64_t seed, int bands, int regions) : bands_(bands) {
  detail::Rng rng(seed);
  sites_.resize(static_cast<std::size_t>(regions));
  signatures_.resize(static_cast<std::size_t>(regions));
  for (int r = 0; r < regions; ++r) {
    sites_[r] = Vec2(rng.uniform(), rng.uniform());
    signatures_[r] = random_spline(rng, 6, 0.08, 0.92, bands);
    for (float& v : signatures_[r]) v = std::clamp(v, 0.0f, 1.0f);
  }
  const int blobs = std::max(4, regions / 2);
  const double cell = 1.0 / std::sqrt(static_cast<double>(regions));
  for (int k = 0; k < blobs; ++k) {
    Blob b;
    b.u = rng.uniform();
    b.v = rng.uniform();
    const double sigma = rng.uniform(0.3, 1.0) * cell;
    b.inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    b.amplitude = rng.uniform(-0.4, 0.4);
    b.profile = random_spline(rng, 4, 0.3, 1.0, bands);
    blobs_.push_back(std::move(b));
  }
}

void SpectralTexture::evaluate(double u, double v, std::span<float> out) const {
  // Nearest and second-nearest sites decide the cell and the soft boundary.
  double d1 = 1e300, d2 = 1e300;
  std::size_t r1 = 0, r2 = 0;
  for (std::size_t r = 0; r < sites_.size(); ++r) {
    const double du = u - sites_[r].x(), dv = v - sites_[r].y();
    const double d = std::sqrt(du * du + dv * dv);
    if (d < d1) {
      d2 = d1;
      r2 = r1;
      d1 = d;
      r1 = r;
    } else if (d < d2) {
      d2 = d;
      r2 = r;
    }
  }
  const double alpha = sites_.size() < 2 ? 1.0 : std::min(1.0, 0.5 + 0.5 * (d2 - d1) / kEdgeSoftness);
  for (int b = 0; b < bands_; ++b) {
    double value = alpha * signatures_[r1][b];
    if (alpha < 1.0) value += (1.0 - alpha) * signatures_[r2][b];
    out[b] = static_cast<float>(value);
  }
  for (const auto& blob : blobs_) {
    const double du = u - blob.u, dv = v - blob.v;
    const double g = blob.amplitude * std::exp(-(du * du + dv * dv) * blob.inv_two_sigma2);
    if (std::abs(g) < 1e-6) continue;
    for (int b = 0; b < bands_; ++b) out[b] = static_cast<float>(out[b] * (1.0 + g * blob.profile[b]));
  }
  for (int b = 0; b < bands_; ++b) out[b] = std::clamp(out[b], 0.0f, 1.0f);
}

HsiCube generate_base_cube(std::uint64_t seed, int bands, int height, int width) {
  const double side = std::max(height, width);
  const SpectralTexture texture(mix_seed(seed, 0), bands, region_count(static_cast<double>(height) * width,
                                                                        height * width / (side * side)));
  HsiCube cube(bands, height, width, default_wavelengths(bands));
  std::vector<float> sample(static_cast<std::size_t>(bands));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      texture.evaluate((x + 0.5) / side, (y + 0.5) / side, sample);
      for (int b = 0; b < bands; ++b) cube.at(b, y, x) = sample[b];
    }
  }
  return cube;
}

Homography sample_homography(const SyntheticPairSpec& spec, std::uint64_t seed) {
  detail::Rng rng(seed);
  const double cx = (spec.width - 1) / 2.0, cy = (spec.height - 1) / 2.0;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double theta = rng.uniform(-spec.rotation_deg, spec.rotation_deg) * std::numbers::pi / 180.0;
    const double s = rng.uniform(spec.scale_min, spec.scale_max);
    const double tx = rng.uniform(-spec.translation_frac, spec.translation_frac) * spec.width;
    const double ty = rng.uniform(-spec.translation_frac, spec.translation_frac) * spec.height;
    const double p1 = rng.uniform(-spec.perspective, spec.perspective);
    const double p2 = rng.uniform(-spec.perspective, spec.perspective);
    Mat3 pre, core, post;
    pre << 1, 0, -cx, 0, 1, -cy, 0, 0, 1;
    core << s * std::cos(theta), -s * std::sin(theta), 0, s * std::sin(theta), s * std::cos(theta), 0, p1, p2, 1;
    post << 1, 0, cx + tx, 0, 1, cy + ty, 0, 0, 1;
    const Mat3 m = post * core * pre;
    if (std::abs(m.determinant() / std::pow(m(2, 2), 3)) < 1e-8) continue;
    return Homography::from_matrix(m);
  }
  fail(ErrorCode::kUsage, "homography ranges only produce degenerate maps");
}

std::vector<std::uint8_t> warp_validity(const Homography& h01, int src_height, int src_width, int height, int width) {
  const Mat3 inv = h01.m.inverse();
  std::vector<std::uint8_t> valid(static_cast<std::size_t>(height) * width, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec3 q = inv * Vec3(x, y, 1.0);
      if (std::abs(q.z()) <= 1e-12) continue;
      valid[static_cast<std::size_t>(y) * width + x] = inside(q.hnormalized(), src_height, src_width) ? 1 : 0;
    }
  }
  return valid;
}

HsiCube warp_cube(const HsiCube& source, const Homography& h01) {
  const Mat3 inv = h01.m.inverse();
  HsiCube out(source.bands, source.height, source.width, source.wavelengths_nm);
  for (int y = 0; y < source.height; ++y) {
    for (int x = 0; x < source.width; ++x) {
      const Vec3 q = inv * Vec3(x, y, 1.0);
      if (std::abs(q.z()) <= 1e-12) continue;
      const Vec2 p = q.hnormalized();
      if (!inside(p, source.height, source.width)) continue;
      for (int b = 0; b < source.bands; ++b) out.at(b, y, x) = bilinear(source, b, p.x(), p.y());
    }
  }
  return out;
}

PlanarPair generate_planar_pair(const HsiCube& base, const SyntheticPairSpec& spec) {
  if (spec.mode != PairMode::kPlanar) fail(ErrorCode::kUsage, "planar pair requested with a non-planar spec");
  spec.validate();
  SyntheticPairSpec sized = spec;
  sized.height = base.height;
  sized.width = base.width;
  PlanarPair pair;
  pair.h01 = sample_homography(sized, mix_seed(spec.seed, 1));
  pair.warped = warp_cube(base, pair.h01);
  pair.valid = warp_validity(pair.h01, base.height, base.width, base.height, base.width);
  apply_jitter(pair.warped, spec, mix_seed(spec.seed, 2), &pair.valid);
  return pair;
}

// ---- epipolar scene ---------------------------------------------------------

EpipolarScene::EpipolarScene(std::uint64_t seed, int bands, double depth, double relief, double extent, int regions)
    : depth_(depth), relief_(relief), extent_(extent), texture_(mix_seed(seed, 0), bands, regions) {
  detail::Rng rng(mix_seed(seed, 1));
  double total = 0.0;
  for (int k = 0; k < 6; ++k) {
    Bump b{rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(0.15, 0.4) * extent,
           rng.uniform(-1.0, 1.0)};
    total += std::abs(b.amplitude);
    bumps_.push_back(b);
  }
  for (auto& b : bumps_) b.amplitude /= total;
}

double EpipolarScene::surface_height(double x, double y) const {
  double h = 0.0;
  for (const auto& b : bumps_) {
    const double dx = x - b.x, dy = y - b.y;
    h += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
  }
  return depth_ * (1.0 + relief_ * h);
}

std::optional<Vec3> EpipolarScene::intersect(const Camera& camera, const Vec2& pixel) const {
  const Vec3 dir = camera.rotation_wc * (camera.k.inverse() * Vec3(pixel.x(), pixel.y(), 1.0));
  const Vec3& o = camera.centre;
  if (dir.z() <= 1e-9) return std::nullopt;
  auto g = [&](double lambda) {
    const Vec3 p = o + lambda * dir;
    return p.z() - surface_height(p.x(), p.y());
  };
  const double z_lo = depth_ * (1.0 - relief_), z_hi = depth_ * (1.0 + relief_);
  double lo = std::max(0.0, (z_lo - o.z()) / dir.z());
  const double hi = (z_hi - o.z()) / dir.z();
  if (hi <= 0.0) return std::nullopt;
  if (relief_ == 0.0) return Vec3(o + lo * dir);
  if (g(lo) > 0.0) return std::nullopt;  // camera below the surface
  // March for the first sign change, then bisect it.
  constexpr int kSteps = 64;
  double a = lo, b = hi;
  bool bracketed = false;
  for (int i = 1; i <= kSteps; ++i) {
    const double t = lo + (hi - lo) * i / kSteps;
    if (g(t) >= 0.0) {
      b = t;
      bracketed = true;
      break;
    }
    a = t;
  }
  if (!bracketed) return std::nullopt;
  for (int i = 0; i < 80; ++i) {
    const double m = 0.5 * (a + b);
    (g(m) >= 0.0 ? b : a) = m;
  }
  return Vec3(o + 0.5 * (a + b) * dir);
}

std::optional<Vec2> EpipolarScene::project(const Camera& camera, const Vec3& point) const {
  const Vec3 pc = camera.rotation_wc.transpose() * (point - camera.centre);
  if (pc.z() <= 1e-9) return std::nullopt;
  return (camera.k.matrix() * pc).hnormalized();
}

HsiCube EpipolarScene::render(const Camera& camera, int height, int width) const {
  const int bands = texture_.bands();
  HsiCube cube(bands, height, width, default_wavelengths(bands));
  std::vector<float> sample(static_cast<std::size_t>(bands));
  const double eps = 1e-4 * extent_;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto hit = intersect(camera, Vec2(x, y));
      if (!hit) continue;
      const Vec3& p = *hit;
      texture_.evaluate((p.x() + extent_) / (2 * extent_), (p.y() + extent_) / (2 * extent_), sample);
      // Lambertian shading under a point light at the world origin.
      const double sx = (surface_height(p.x() + eps, p.y()) - surface_height(p.x() - eps, p.y())) / (2 * eps);
      const double sy = (surface_height(p.x(), p.y() + eps) - surface_height(p.x(), p.y() - eps)) / (2 * eps);
      const Vec3 normal = Vec3(sx, sy, -1.0).normalized();
      const double shade = 0.55 + 0.45 * std::max(0.0, normal.dot((-p).normalized()));
      for (int b = 0; b < bands; ++b) cube.at(b, y, x) = static_cast<float>(std::clamp(sample[b] * shade, 0.0, 1.0));
    }
  }
  return cube;
}

std::optional<Vec2> EpipolarScene::correspond(const Camera& from, const Camera& to, const Vec2& pixel, int height,
                                              int width) const {
  const auto hit = intersect(from, pixel);
  if (!hit) return std::nullopt;
  const auto proj = project(to, *hit);
  if (!proj || !inside(*proj, height, width)) return std::nullopt;
  const auto back = intersect(to, *proj);
  if (!back || (*back - *hit).norm() > 1e-6 * depth_) return std::nullopt;  // occluded
  return proj;
}

EpipolarScene EpipolarPair::scene() const {
  return EpipolarScene(scene_seed, bands, depth, relief, extent, regions);
}

geometry::RelativePose relative_pose(const Camera& from, const Camera& to) {
  // X_to = R_to^T (R_from X_from + C_from - C_to)
  geometry::RelativePose pose;
  pose.rotation = to.rotation_wc.transpose() * from.rotation_wc;
  pose.translation = to.rotation_wc.transpose() * (from.centre - to.centre);
  return pose;
}

namespace {

Mat3 look_at(const Vec3& centre, const Vec3& target) {
  const Vec3 forward = (target - centre).normalized();
  const Vec3 right = Vec3(0, 1, 0).cross(forward).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return r;
}

}  // namespace

EpipolarPair generate_epipolar_pair(const SyntheticPairSpec& spec) {
  if (spec.mode != PairMode::kEpipolar) fail(ErrorCode::kUsage, "epipolar pair requested with a non-epipolar spec");
  spec.validate();
  EpipolarPair pair;
  pair.depth = 100.0;
  pair.relief = spec.relief;
  pair.extent = pair.depth;
  pair.scene_seed = mix_seed(spec.seed, 10);
  pair.bands = spec.bands;

  geometry::Intrinsics k;
  k.fx = k.fy = 0.9 * spec.width;
  k.cx = (spec.width - 1) / 2.0;
  k.cy = (spec.height - 1) / 2.0;
  // Fraction of the texture domain seen by one camera at nominal depth.
  const double half_w = (spec.width / 2.0) / k.fx * pair.depth, half_h = (spec.height / 2.0) / k.fy * pair.depth;
  const double visible = (half_w * half_h) / (pair.extent * pair.extent);
  pair.regions = region_count(static_cast<double>(spec.height) * spec.width, visible);
  const EpipolarScene scene = pair.scene();

  pair.camera0.k = k;
  pair.camera2.k = k;
  const Vec3 target(0.0, 0.0, pair.depth);
  for (int attempt = 0; attempt < 200; ++attempt) {
    detail::Rng rng(mix_seed(spec.seed, 11 + attempt));
    const double baseline = rng.uniform(spec.baseline_min, spec.baseline_max) * pair.depth;
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Vec3 dir = Vec3(std::cos(phi), std::sin(phi), rng.uniform(-0.2, 0.2)).normalized();
    Camera cam2;
    cam2.k = k;
    cam2.centre = baseline * dir;
    const Vec3 axis(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double angle = rng.uniform(-spec.view_rotation_deg, spec.view_rotation_deg) * std::numbers::pi / 180.0;
    cam2.rotation_wc = look_at(cam2.centre, target) * geometry::rotation_from_axis_angle(axis, angle);
    if (baseline == 0.0) cam2.rotation_wc = geometry::rotation_from_axis_angle(axis, angle);

    // Require at least half of a coarse pixel grid to be covisible.
    int seen = 0, total = 0;
    for (int gy = 0; gy < 8; ++gy) {
      for (int gx = 0; gx < 8; ++gx) {
        const Vec2 px((gx + 0.5) * (spec.width - 1) / 8.0, (gy + 0.5) * (spec.height - 1) / 8.0);
        ++total;
        if (scene.correspond(pair.camera0, cam2, px, spec.height, spec.width)) ++seen;
      }
    }
    if (2 * seen < total) continue;
    pair.camera2 = cam2;
    pair.pose02 = relative_pose(pair.camera0, pair.camera2);
    pair.view0 = scene.render(pair.camera0, spec.height, spec.width);
    pair.view2 = scene.render(pair.camera2, spec.height, spec.width);
    apply_jitter(pair.view2, spec, mix_seed(spec.seed, 12), nullptr);
    return pair;
  }
  fail(ErrorCode::kUsage, "could not draw a covisible second camera");
}

}  // namespace hykey::hsi
