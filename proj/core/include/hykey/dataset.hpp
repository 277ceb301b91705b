#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "hykey/geometry.hpp"
#include "hykey/hsidata.hpp"

namespace hykey::data {

// Camera-to-world rotation as a unit quaternion (w, x, y, z) and the camera
// centre in millimetres.
struct FramePose {
  std::array<double, 4> quaternion_wxyz{1.0, 0.0, 0.0, 0.0};
  geometry::Vec3 translation_mm = geometry::Vec3::Zero();

  static FramePose from_camera(const hsi::Camera& camera);
  geometry::Mat3 rotation() const;
};

struct FrameRecord {
  std::string cube_path;  // relative to the manifest directory
  std::optional<geometry::Intrinsics> intrinsics;
  std::optional<FramePose> pose;
  std::string sequence_id;
  int frame_index = 0;
};

struct TripletRecord {
  std::string id;
  std::size_t base = 0;
  std::size_t warped = 0;
  geometry::Homography h01;
  std::optional<std::size_t> second;
};

struct DatasetManifest {
  std::string mode;  // "planar" or "epipolar"
  std::uint64_t seed = 0;
  nlohmann::json generator;  // resolved generation settings
  std::vector<FrameRecord> frames;
  std::vector<TripletRecord> triplets;

  void validate() const;
};

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& doc);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct SecondView {
  hsi::HsiCube cube;
  geometry::Intrinsics k0;
  geometry::Intrinsics k2;
  geometry::RelativePose pose02;
};

struct TrainingTriplet {
  std::string id;
  hsi::HsiCube i0;
  hsi::HsiCube i1;
  geometry::Homography h01;
  std::vector<std::uint8_t> valid1;  // pixels of I1 with a source in I0
  std::optional<SecondView> second;
};

// Generator settings as stored in the manifest; reading rejects unknown keys.
nlohmann::json spec_to_json(const hsi::SyntheticPairSpec& spec);
hsi::SyntheticPairSpec spec_from_json(const nlohmann::json& j, const std::string& path = "data");

// Planar mode: I0 is a textured cube. Epipolar mode: I0 and I2 are renders of
// one scene, I1 is a homographic warp of I0 in both modes.
TrainingTriplet synthesize_triplet(const hsi::SyntheticPairSpec& spec, std::uint64_t item_seed, std::string id);

std::vector<TrainingTriplet> synthesize_dataset(const hsi::SyntheticPairSpec& spec, int count);

// Writes cubes and manifest.json into dir. Refuses a non-empty dir unless
// force is set.
DatasetManifest write_dataset(const std::filesystem::path& dir, const hsi::SyntheticPairSpec& spec, int count,
                              bool force);

TrainingTriplet load_triplet(const std::filesystem::path& dir, const DatasetManifest& manifest, std::size_t index);
std::vector<TrainingTriplet> load_dataset(const std::filesystem::path& dir);

}  // namespace hykey::data
