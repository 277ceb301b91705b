#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hykey/checkpoint.hpp"
#include "hykey/dataset.hpp"
#include "hykey/losses.hpp"
#include "hykey/model.hpp"

namespace hykey::training {

struct TrainConfig {
  double learning_rate = 3e-4;
  int warmup_steps = 500;
  int batch_size = 6;
  int epoch_frame_cap = 10000;
  int epochs = 1;
  int epipolar_start_epoch = 5;  // lambda_epi is 0 for epochs 1..start
  bool epipolar = true;          // false: the noPE variant
  double grad_clip = 10.0;
  int max_steps = 0;  // 0: no limit
  std::uint64_t seed = 0;
  losses::LossWeights weights;
  losses::LossSettings loss;
  model::HyKeyConfig model;

  void validate() const;
  nlohmann::json to_json() const;
  // Keys outside the schema are rejected with their dotted path.
  static TrainConfig from_json(const nlohmann::json& j, const std::string& path = "train");
};

// base * min(1, step / warmup).
double lr_schedule(std::int64_t step, const TrainConfig& config);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

// Bias-corrected Adam. Returns false and leaves everything untouched when any
// gradient is non-finite.
bool adam_step(std::vector<model::Parameter>& params, AdamState& state, double lr);

// Rescales all gradients so their global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_gradients(std::vector<model::Parameter>& params, double max_norm);

struct BatchItem {
  std::size_t dataset = 0;
  std::size_t index = 0;
};

struct EpochPlan {
  std::vector<std::vector<BatchItem>> batches;
  std::vector<std::string> events;
  std::size_t frames = 0;
};

// min(cap, total) frames in batches of batch_size; with two datasets each
// batch takes half from each, and a dataset that runs out is resampled with
// replacement (recorded in events).
EpochPlan plan_epoch(const std::vector<std::size_t>& dataset_sizes, const TrainConfig& config, int epoch);

struct TripletResult {
  losses::TotalLoss loss;
  std::size_t keypoints0 = 0;
  std::size_t keypoints1 = 0;
  std::size_t labelled = 0;
};

// Forward passes of I0, I1 (and I2 when the epipolar weight is active) and
// the combined loss. Records on the caller's tape.
TripletResult triplet_loss(model::HyKeyNetwork& network, const data::TrainingTriplet& triplet,
                           const TrainConfig& config, int epoch, std::uint64_t seed);

struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  losses::LossBreakdown loss;  // batch mean
  double keypoints = 0.0;      // mean keypoints per view
  double labelled = 0.0;       // mean labelled correspondences per pair
  double grad_norm = 0.0;
  bool clipped = false;
  bool skipped = false;
  std::vector<std::string> events;

  nlohmann::json to_json() const;
};

class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<std::vector<data::TrainingTriplet>> datasets);

  const TrainConfig& config() const { return config_; }
  model::HyKeyNetwork& network() { return network_; }
  const AdamState& adam() const { return adam_; }
  std::int64_t global_step() const { return step_; }
  int epoch() const { return epoch_; }
  bool finished() const;

  StepLog step();
  // Steps until `epochs` are complete or max_steps is reached.
  void run(const std::function<void(const StepLog&)>& sink);

  Checkpoint checkpoint() const;
  // Restores network, optimiser and schedule position; refuses a checkpoint
  // whose model config differs from this trainer's.
  void restore(const Checkpoint& ckpt);

 private:
  void ensure_plan();

  TrainConfig config_;
  std::vector<std::vector<data::TrainingTriplet>> datasets_;
  model::HyKeyNetwork network_;
  AdamState adam_;
  std::int64_t step_ = 0;
  int epoch_ = 1;
  std::size_t batch_ = 0;
  EpochPlan plan_;
  int planned_epoch_ = 0;
};

}  // namespace hykey::training
