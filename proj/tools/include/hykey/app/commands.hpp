#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "hykey/app/report.hpp"
#include "hykey/dataset.hpp"
#include "hykey/matching.hpp"
#include "hykey/metrics.hpp"
#include "hykey/model.hpp"
#include "hykey/training.hpp"

namespace hykey::app {

// ---- detection, matching and evaluation --------------------------------------

struct PairMatches {
  std::vector<geometry::Vec2> kpts0, kpts1;
  std::vector<matching::Match> matches;
  geometry::CorrespondenceSet correspondences;
};

std::vector<geometry::Vec2> to_points(const Tensor& points);

// Eval-mode detection on both cubes followed by mutual nearest neighbour
// matching.
PairMatches detect_and_match(model::HyKeyNetwork& network, const hsi::HsiCube& a, const hsi::HsiCube& b);

// I0 against its homographic warp I1 of every triplet.
EvalReport evaluate_homography(model::HyKeyNetwork& network, const std::vector<data::TrainingTriplet>& triplets,
                               const metrics::EvalOptions& options = {});
// I0 against the second view I2; refuses triplets without one.
EvalReport evaluate_pose(model::HyKeyNetwork& network, const std::vector<data::TrainingTriplet>& triplets,
                         const metrics::EvalOptions& options = {});

// ---- run configuration -------------------------------------------------------

// Reads HYKEY_SEED; nullopt when unset, kConfig when not an unsigned integer.
std::optional<std::uint64_t> env_seed();
// Reads HYKEY_THREADS (default 1). Work runs on the calling thread regardless;
// the value is echoed into artifacts.
int env_threads();

// ---- subcommands -------------------------------------------------------------

struct GenDataOptions {
  std::optional<std::filesystem::path> config;  // document with a "data" object
  std::optional<std::string> mode;
  int count = 0;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

// Resolved generator settings: defaults < config file < HYKEY_SEED < flags.
hsi::SyntheticPairSpec resolve_gen_data(const GenDataOptions& options);
data::DatasetManifest cmd_gen_data(const GenDataOptions& options);

// Training document:
//   train      TrainConfig fields (model, weights, loss nested)
//   datasets   list of {"path": DIR} or {"synthetic": {generator}, "count": N}
//   checkpoint_every  steps between intermediate checkpoints (0: final only)
struct TrainOptions {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  bool no_pe = false;
};

struct RunDocument {
  training::TrainConfig train;
  std::vector<nlohmann::json> datasets;
  int checkpoint_every = 0;
  nlohmann::json resolved;  // echoed into every artifact
};

RunDocument resolve_train(const nlohmann::json& document, const std::filesystem::path& base_dir, bool no_pe);
std::vector<std::vector<data::TrainingTriplet>> load_training_data(const RunDocument& run);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::int64_t steps = 0;
};

TrainResult cmd_train(const TrainOptions& options, const std::function<void(const training::StepLog&)>& progress = {});

struct EvalCommandOptions {
  std::string mode = "homography";
  std::filesystem::path ckpt;
  std::filesystem::path data;
  int max_kpts = 1024;
  std::filesystem::path out = "report.json";
};

EvalReport cmd_eval(const EvalCommandOptions& options);

struct MatchCommandOptions {
  std::filesystem::path ckpt;
  std::filesystem::path a, b;
  std::filesystem::path out = "viz.svg";
  int max_kpts = 1024;
  // JSON with "homography" (planar, 3 px) or "fundamental" (epipolar, 5 px),
  // each nine row-major numbers mapping a to b.
  std::optional<std::filesystem::path> ground_truth;
};

struct MatchResult {
  nlohmann::json json;
  std::string svg;
};

MatchResult cmd_match(const MatchCommandOptions& options);

model::HyKeyNetwork load_network(const std::filesystem::path& ckpt, std::optional<int> max_keypoints = std::nullopt);

}  // namespace hykey::app
