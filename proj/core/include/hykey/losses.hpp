#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "hykey/geometry.hpp"
#include "hykey/model.hpp"
#include "hykey/tensor.hpp"

namespace hykey::losses {

struct LossWeights {
  float pk = 0.5f;
  float rp = 1.0f;
  float rel = 1.0f;
  float desc = 5.0f;
  float epi = 0.25f;

  void validate() const;
  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j, const std::string& path = "weights");
};

struct LossSettings {
  float score_threshold = 0.1f;  // centre of the keypoint confidence sigmoid
  float sigmoid_width = 0.1f;
  int window_radius = 2;
  float window_temperature = 0.1f;
  float reprojection_radius = 5.0f;
  float label_radius = 3.0f;
  float huber_reprojection = 1.0f;
  float huber_epipolar = 1.0f;
  float descriptor_temperature = 0.02f;
  float epipolar_temperature = 0.02f;

  static LossSettings from(const model::HyKeyConfig& config);
  nlohmann::json to_json() const;
};

// A loss value plus whether it fell back to 0 for lack of supervision.
struct Term {
  Tensor value;
  bool empty = false;
};

// partner[i] is the index in view 1 of keypoint i's ground-truth partner, or
// -1. Partners are mutual nearest neighbours of the H01 projection within
// `radius` px.
struct Labels {
  std::vector<std::int64_t> partner;
  std::size_t count() const;
};

Labels homography_labels(const Tensor& points0, const Tensor& points1, const geometry::Homography& h01, float radius);

// Expected distance between window pixels and the refined keypoint under
// softmax(window / T), weighted by sigmoid((s - t_sc) / width).
Term loss_pk(const Tensor& score_map, const model::Keypoints& keypoints, const LossSettings& settings);

// Symmetric Huber reprojection error to the nearest detection within the
// reprojection radius, weighted by both keypoints' confidence sigmoids.
Term loss_rp(const Tensor& points0, const Tensor& scores0, const Tensor& points1, const Tensor& scores1,
             const geometry::Homography& h01, const LossSettings& settings);

// BCE between keypoint scores and their soft matchability: the row (view 0)
// or column (view 1) softmax mass of sim / T on the labelled partner. The
// similarities only form the target and receive no gradient.
Term loss_rel(const Tensor& scores0, const Tensor& scores1, const Tensor& sim, const Labels& labels,
              const LossSettings& settings);

// Symmetric cross-entropy of sim / T against the labels.
Term loss_desc(const Tensor& sim, const Labels& labels, float temperature);

// Expected Huber(Sampson) over soft correspondences P = softmax(sim / T), in
// both directions. Coordinates are pixels; the Sampson distance is measured in
// normalised pixels of the given intrinsics. f02 maps pixels.
Term loss_epi(const Tensor& points0, const Tensor& points2, const Tensor& sim, const geometry::Mat3& f02,
              const geometry::Intrinsics& k0, const geometry::Intrinsics& k2, const LossSettings& settings);

struct LossBreakdown {
  double pk = 0, rp = 0, rel = 0, desc = 0, epi = 0;
  LossWeights weights;  // weights actually applied (epi gated)
  double total = 0;
  std::vector<std::string> warnings;

  double weighted(double w, double v) const { return static_cast<double>(w) * v; }
  nlohmann::json to_json() const;
};

struct LossTerms {
  Term pk, rp, rel, desc;
  std::optional<Term> epi;
};

struct TotalLoss {
  Tensor total;
  LossBreakdown breakdown;
};

// Effective epipolar weight: 0 for epochs <= start_epoch or when disabled.
float epipolar_weight(const LossWeights& weights, int epoch, int start_epoch, bool epipolar_enabled);

TotalLoss total_loss(const LossTerms& terms, const LossWeights& weights, int epoch, int start_epoch,
                     bool epipolar_enabled);

}  // namespace hykey::losses
