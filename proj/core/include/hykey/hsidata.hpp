#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "hykey/geometry.hpp"
#include "hykey/tensor.hpp"

namespace hykey::hsi {

// Band-sequential radiance volume with values in [0,1].
struct HsiCube {
  int bands = 0;
  int height = 0;
  int width = 0;
  std::vector<float> wavelengths_nm;
  std::vector<float> data;

  HsiCube() = default;
  HsiCube(int bands, int height, int width, std::vector<float> wavelengths_nm);

  float& at(int band, int y, int x) { return data[(static_cast<std::size_t>(band) * height + y) * width + x]; }
  float at(int band, int y, int x) const { return data[(static_cast<std::size_t>(band) * height + y) * width + x]; }
  std::span<const float> band(int b) const;

  // Throws kFormat* errors on a broken invariant.
  void validate() const;
  // Min-max rescale of the whole cube into [0,1]; constant cubes map to 0.
  void normalise();
  // [1, bands, height, width] network input.
  Tensor to_tensor() const;

  bool operator==(const HsiCube&) const = default;
};

// 460-600 nm, evenly spaced.
std::vector<float> default_wavelengths(int bands = 16);

// Raw snapshot-mosaic frame; pattern[r * 4 + c] is the band recorded at cell
// (r, c) of every 4x4 super-pixel.
struct MosaicFrame {
  int height = 0;
  int width = 0;
  std::vector<float> data;
  std::array<int, 16> pattern{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
};

HsiCube demosaic_4x4(const MosaicFrame& frame, std::vector<float> wavelengths_nm = default_wavelengths());
MosaicFrame remosaic_4x4(const HsiCube& cube, const std::array<int, 16>& pattern = MosaicFrame{}.pattern);

// ---- cube file format -------------------------------------------------------
// 16-byte magic "HYKYCUBE" + 7 zero bytes + version byte 1, u32 LE header
// length, UTF-8 JSON header {bands,height,width,dtype:"f32le",wavelengths_nm},
// band-sequential little-endian float32 payload.

std::vector<std::uint8_t> encode_cube(const HsiCube& cube);
HsiCube decode_cube(std::span<const std::uint8_t> bytes);
void save_cube(const HsiCube& cube, const std::filesystem::path& path);
HsiCube load_cube(const std::filesystem::path& path);

// ---- synthetic scenes -------------------------------------------------------

enum class PairMode { kPlanar, kEpipolar };

struct SyntheticPairSpec {
  PairMode mode = PairMode::kPlanar;
  std::uint64_t seed = 0;
  int bands = 16;
  int height = 32;
  int width = 32;

  // photometric jitter
  double gain_min = 0.7, gain_max = 1.3;
  double gamma_min = 0.8, gamma_max = 1.2;
  double noise_std = 0.01;
  double band_gain_min = 0.9, band_gain_max = 1.1;

  // homography sampling
  double rotation_deg = 15.0;
  double scale_min = 0.8, scale_max = 1.25;
  double translation_frac = 0.1;
  double perspective = 1e-4;

  // epipolar scene
  double baseline_min = 0.05, baseline_max = 0.3;  // fraction of scene depth
  double view_rotation_deg = 5.0;
  double relief = 0.15;  // surface height amplitude as a fraction of depth

  // All ranges collapsed: identity warp, no jitter, zero baseline.
  static SyntheticPairSpec identity(PairMode mode);
  void validate() const;
};

// Spatially homogeneous regions (soft Voronoi cells) with random smooth
// spectral signatures, modulated by Gaussian blobs. Evaluated at continuous
// texture coordinates so any camera can sample it.
class SpectralTexture {
 public:
  SpectralTexture(std::uint64_t seed, int bands, int regions);
  // Writes `bands` values in [0,1] for texture coordinate (u, v) in [0,1]^2.
  void evaluate(double u, double v, std::span<float> out) const;
  int bands() const { return bands_; }

 private:
  struct Blob {
    double u, v, inv_two_sigma2, amplitude;
    std::vector<float> profile;
  };
  int bands_;
  std::vector<geometry::Vec2> sites_;
  std::vector<std::vector<float>> signatures_;
  std::vector<Blob> blobs_;
};

HsiCube generate_base_cube(std::uint64_t seed, int bands, int height, int width);

geometry::Homography sample_homography(const SyntheticPairSpec& spec, std::uint64_t seed);

// Pixel x of the target is valid iff H01^-1 x lies inside the source image.
std::vector<std::uint8_t> warp_validity(const geometry::Homography& h01, int src_height, int src_width, int height,
                                        int width);

// Inverse bilinear warp of every band; invalid pixels are zero.
HsiCube warp_cube(const HsiCube& source, const geometry::Homography& h01);

struct PlanarPair {
  HsiCube warped;
  geometry::Homography h01;
  std::vector<std::uint8_t> valid;
};

PlanarPair generate_planar_pair(const HsiCube& base, const SyntheticPairSpec& spec);

// Pinhole camera with pose camera-to-world.
struct Camera {
  geometry::Intrinsics k;
  geometry::Mat3 rotation_wc = geometry::Mat3::Identity();
  geometry::Vec3 centre = geometry::Vec3::Zero();
};

// Height-field surface z = depth * (1 + relief * h(x, y)) under a world-fixed
// light, textured by spectral regions.
class EpipolarScene {
 public:
  EpipolarScene(std::uint64_t seed, int bands, double depth, double relief, double extent, int regions);

  std::optional<geometry::Vec3> intersect(const Camera& camera, const geometry::Vec2& pixel) const;
  std::optional<geometry::Vec2> project(const Camera& camera, const geometry::Vec3& point) const;
  HsiCube render(const Camera& camera, int height, int width) const;
  // Ground-truth correspondence of a view-0 pixel in view 2, if visible.
  std::optional<geometry::Vec2> correspond(const Camera& from, const Camera& to, const geometry::Vec2& pixel,
                                           int height, int width) const;
  // Height-field z(x, y) of the surface.
  double surface_height(double x, double y) const;
  double depth() const { return depth_; }

 private:
  struct Bump {
    double x, y, sigma, amplitude;
  };
  double depth_;
  double relief_;
  double extent_;
  SpectralTexture texture_;
  std::vector<Bump> bumps_;
};

struct EpipolarPair {
  HsiCube view0;
  HsiCube view2;
  Camera camera0;
  Camera camera2;
  geometry::RelativePose pose02;  // X2 = R X0 + t
  std::uint64_t scene_seed = 0;
  double depth = 100.0;
  double relief = 0.0;
  double extent = 100.0;
  int regions = 0;
  int bands = 16;

  EpipolarScene scene() const;
};

EpipolarPair generate_epipolar_pair(const SyntheticPairSpec& spec);

geometry::RelativePose relative_pose(const Camera& from, const Camera& to);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace hykey::hsi
