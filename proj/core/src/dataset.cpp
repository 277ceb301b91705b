#include "hykey/dataset.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <fstream>

#include "hykey/config.hpp"
#include "hykey/error.hpp"

namespace hykey::data {

namespace fs = std::filesystem;
using nlohmann::json;

FramePose FramePose::from_camera(const hsi::Camera& camera) {
  Eigen::Quaterniond q(camera.rotation_wc);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  FramePose p;
  p.quaternion_wxyz = {q.w(), q.x(), q.y(), q.z()};
  p.translation_mm = camera.centre;
  return p;
}

geometry::Mat3 FramePose::rotation() const {
  const auto& q = quaternion_wxyz;
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
}

void DatasetManifest::validate() const {
  if (mode != "planar" && mode != "epipolar") fail(ErrorCode::kConfig, "manifest mode must be planar or epipolar");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    const std::string where = "frames[" + std::to_string(i) + "]";
    if (f.intrinsics && !(f.intrinsics->fx > 0 && f.intrinsics->fy > 0)) {
      fail(ErrorCode::kConfig, where + ".intrinsics: focal lengths must be positive");
    }
    if (f.pose) {
      const auto& q = f.pose->quaternion_wxyz;
      const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
      if (std::abs(n - 1.0) > 1e-6) fail(ErrorCode::kConfig, where + ".pose: quaternion is not unit-norm");
    }
  }
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    const std::string where = "triplets[" + std::to_string(i) + "]";
    if (t.base >= frames.size() || t.warped >= frames.size() || (t.second && *t.second >= frames.size())) {
      fail(ErrorCode::kConfig, where + ": frame index out of range");
    }
    if (t.second && (!frames[t.base].pose || !frames[*t.second].pose || !frames[t.base].intrinsics ||
                     !frames[*t.second].intrinsics)) {
      fail(ErrorCode::kConfig, where + ": second view needs pose and intrinsics on both frames");
    }
  }
}

namespace {

json intrinsics_json(const geometry::Intrinsics& k) { return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}; }

geometry::Intrinsics intrinsics_from(const json& j) {
  return {j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(), j.at("cy").get<double>()};
}

}  // namespace

json manifest_to_json(const DatasetManifest& m) {
  json doc;
  doc["format"] = "hykey-manifest";
  doc["version"] = 1;
  doc["mode"] = m.mode;
  doc["seed"] = m.seed;
  doc["generator"] = m.generator;
  doc["frames"] = json::array();
  for (const auto& f : m.frames) {
    json jf{{"cube_path", f.cube_path}, {"sequence_id", f.sequence_id}, {"frame_index", f.frame_index}};
    if (f.intrinsics) jf["intrinsics"] = intrinsics_json(*f.intrinsics);
    if (f.pose) {
      jf["pose"] = {{"quaternion_wxyz", f.pose->quaternion_wxyz},
                    {"translation_mm", {f.pose->translation_mm.x(), f.pose->translation_mm.y(),
                                        f.pose->translation_mm.z()}}};
    }
    doc["frames"].push_back(std::move(jf));
  }
  doc["triplets"] = json::array();
  for (const auto& t : m.triplets) {
    json jt{{"id", t.id}, {"base", t.base}, {"warped", t.warped}, {"homography", t.h01.row_major()}};
    if (t.second) jt["second"] = *t.second;
    doc["triplets"].push_back(std::move(jt));
  }
  return doc;
}

DatasetManifest manifest_from_json(const json& doc) {
  DatasetManifest m;
  try {
    m.mode = doc.at("mode").get<std::string>();
    m.seed = doc.value("seed", std::uint64_t{0});
    m.generator = doc.value("generator", json::object());
    for (const auto& jf : doc.at("frames")) {
      FrameRecord f;
      f.cube_path = jf.at("cube_path").get<std::string>();
      f.sequence_id = jf.value("sequence_id", std::string());
      f.frame_index = jf.value("frame_index", 0);
      if (jf.contains("intrinsics")) f.intrinsics = intrinsics_from(jf.at("intrinsics"));
      if (jf.contains("pose")) {
        FramePose p;
        p.quaternion_wxyz = jf.at("pose").at("quaternion_wxyz").get<std::array<double, 4>>();
        const auto t = jf.at("pose").at("translation_mm").get<std::array<double, 3>>();
        p.translation_mm = geometry::Vec3(t[0], t[1], t[2]);
        f.pose = p;
      }
      m.frames.push_back(std::move(f));
    }
    for (const auto& jt : doc.at("triplets")) {
      TripletRecord t;
      t.id = jt.at("id").get<std::string>();
      t.base = jt.at("base").get<std::size_t>();
      t.warped = jt.at("warped").get<std::size_t>();
      const auto h = jt.at("homography").get<std::array<double, 9>>();
      t.h01 = geometry::Homography::from_matrix(Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(h.data()));
      if (jt.contains("second")) t.second = jt.at("second").get<std::size_t>();
      m.triplets.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << manifest_to_json(manifest).dump(2) << '\n';
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
  return manifest_from_json(doc);
}

TrainingTriplet synthesize_triplet(const hsi::SyntheticPairSpec& spec, std::uint64_t item_seed, std::string id) {
  TrainingTriplet t;
  t.id = std::move(id);
  hsi::SyntheticPairSpec planar = spec;
  planar.mode = hsi::PairMode::kPlanar;
  planar.seed = hsi::mix_seed(item_seed, 1);
  if (spec.mode == hsi::PairMode::kPlanar) {
    t.i0 = hsi::generate_base_cube(hsi::mix_seed(item_seed, 0), spec.bands, spec.height, spec.width);
  } else {
    hsi::SyntheticPairSpec epi = spec;
    epi.seed = hsi::mix_seed(item_seed, 2);
    auto pair = hsi::generate_epipolar_pair(epi);
    t.i0 = std::move(pair.view0);
    t.second = SecondView{std::move(pair.view2), pair.camera0.k, pair.camera2.k, pair.pose02};
  }
  auto warped = hsi::generate_planar_pair(t.i0, planar);
  t.i1 = std::move(warped.warped);
  t.h01 = warped.h01;
  t.valid1 = std::move(warped.valid);
  return t;
}

std::vector<TrainingTriplet> synthesize_dataset(const hsi::SyntheticPairSpec& spec, int count) {
  std::vector<TrainingTriplet> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    out.push_back(synthesize_triplet(spec, hsi::mix_seed(spec.seed, 1000 + static_cast<std::uint64_t>(i)),
                                     "pair_" + std::to_string(i)));
  }
  return out;
}

json spec_to_json(const hsi::SyntheticPairSpec& s) {
  return {{"mode", s.mode == hsi::PairMode::kPlanar ? "planar" : "epipolar"},
          {"seed", s.seed},
          {"bands", s.bands},
          {"height", s.height},
          {"width", s.width},
          {"gain", {s.gain_min, s.gain_max}},
          {"gamma", {s.gamma_min, s.gamma_max}},
          {"noise_std", s.noise_std},
          {"band_gain", {s.band_gain_min, s.band_gain_max}},
          {"rotation_deg", s.rotation_deg},
          {"scale", {s.scale_min, s.scale_max}},
          {"translation_frac", s.translation_frac},
          {"perspective", s.perspective},
          {"baseline", {s.baseline_min, s.baseline_max}},
          {"view_rotation_deg", s.view_rotation_deg},
          {"relief", s.relief}};
}


hsi::SyntheticPairSpec spec_from_json(const json& j, const std::string& path) {
  const config::Reader r(j, path);
  r.require_known({"mode", "seed", "bands", "height", "width", "gain", "gamma", "noise_std", "band_gain",
                   "rotation_deg", "scale", "translation_frac", "perspective", "baseline", "view_rotation_deg",
                   "relief"});
  hsi::SyntheticPairSpec s;
  const auto mode = r.get<std::string>("mode", "planar");
  if (mode == "planar") s.mode = hsi::PairMode::kPlanar;
  else if (mode == "epipolar") s.mode = hsi::PairMode::kEpipolar;
  else fail(ErrorCode::kConfig, r.where("mode") + ": expected planar or epipolar, got " + mode);
  s.seed = r.get("seed", s.seed);
  s.bands = r.get("bands", s.bands);
  s.height = r.get("height", s.height);
  s.width = r.get("width", s.width);
  auto range = [&](const char* key, double& lo, double& hi) {
    const auto v = r.get(key, std::array<double, 2>{lo, hi});
    lo = v[0];
    hi = v[1];
  };
  range("gain", s.gain_min, s.gain_max);
  range("gamma", s.gamma_min, s.gamma_max);
  s.noise_std = r.get("noise_std", s.noise_std);
  range("band_gain", s.band_gain_min, s.band_gain_max);
  s.rotation_deg = r.get("rotation_deg", s.rotation_deg);
  range("scale", s.scale_min, s.scale_max);
  s.translation_frac = r.get("translation_frac", s.translation_frac);
  s.perspective = r.get("perspective", s.perspective);
  range("baseline", s.baseline_min, s.baseline_max);
  s.view_rotation_deg = r.get("view_rotation_deg", s.view_rotation_deg);
  s.relief = r.get("relief", s.relief);
  try {
    s.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, path + ": " + e.what());
  }
  return s;
}

DatasetManifest write_dataset(const fs::path& dir, const hsi::SyntheticPairSpec& spec, int count, bool force) {
  if (count < 1) fail(ErrorCode::kConfig, "count must be positive");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    fail(ErrorCode::kRefused, dir.string() + " is not empty (pass --force to overwrite)");
  }
  DatasetManifest m;
  m.mode = spec.mode == hsi::PairMode::kPlanar ? "planar" : "epipolar";
  m.seed = spec.seed;
  m.generator = spec_to_json(spec);
  const auto triplets = synthesize_dataset(spec, count);
  fs::create_directories(dir / "cubes");
  for (const auto& t : triplets) {
    auto add_frame = [&](const hsi::HsiCube& cube, const std::string& suffix, int index) {
      FrameRecord f;
      f.cube_path = "cubes/" + t.id + "_" + suffix + ".hycube";
      f.sequence_id = t.id;
      f.frame_index = index;
      hsi::save_cube(cube, dir / f.cube_path);
      m.frames.push_back(f);
      return m.frames.size() - 1;
    };
    TripletRecord r;
    r.id = t.id;
    r.h01 = t.h01;
    r.base = add_frame(t.i0, "i0", 0);
    r.warped = add_frame(t.i1, "i1", 1);
    if (t.second) {
      r.second = add_frame(t.second->cube, "i2", 2);
      hsi::Camera c0, c2;
      c0.k = t.second->k0;
      // View 0 defines the world frame: camera 2 sits at C = -R^T t.
      c2.k = t.second->k2;
      c2.rotation_wc = t.second->pose02.rotation.transpose();
      c2.centre = -c2.rotation_wc * t.second->pose02.translation;
      m.frames[r.base].intrinsics = c0.k;
      m.frames[r.base].pose = FramePose::from_camera(c0);
      m.frames[*r.second].intrinsics = c2.k;
      m.frames[*r.second].pose = FramePose::from_camera(c2);
    }
    m.triplets.push_back(r);
  }
  write_manifest(m, dir / "manifest.json");
  return m;
}

TrainingTriplet load_triplet(const fs::path& dir, const DatasetManifest& m, std::size_t index) {
  const auto& r = m.triplets.at(index);
  TrainingTriplet t;
  t.id = r.id;
  t.i0 = hsi::load_cube(dir / m.frames[r.base].cube_path);
  t.i1 = hsi::load_cube(dir / m.frames[r.warped].cube_path);
  t.h01 = r.h01;
  t.valid1 = hsi::warp_validity(r.h01, t.i0.height, t.i0.width, t.i1.height, t.i1.width);
  if (r.second) {
    const auto& f0 = m.frames[r.base];
    const auto& f2 = m.frames[*r.second];
    hsi::Camera c0, c2;
    c0.rotation_wc = f0.pose->rotation();
    c0.centre = f0.pose->translation_mm;
    c2.rotation_wc = f2.pose->rotation();
    c2.centre = f2.pose->translation_mm;
    t.second = SecondView{hsi::load_cube(dir / f2.cube_path), *f0.intrinsics, *f2.intrinsics,
                          hsi::relative_pose(c0, c2)};
  }
  return t;
}

std::vector<TrainingTriplet> load_dataset(const fs::path& dir) {
  const auto m = read_manifest(dir / "manifest.json");
  std::vector<TrainingTriplet> out;
  for (std::size_t i = 0; i < m.triplets.size(); ++i) out.push_back(load_triplet(dir, m, i));
  return out;
}

}  // namespace hykey::data
