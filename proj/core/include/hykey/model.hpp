#pragma once

#include <array>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hykey/hsidata.hpp"
#include "hykey/ops.hpp"
#include "hykey/tensor.hpp"

namespace hykey::model {

struct HyKeyConfig {
  std::array<int, 3> channels{32, 64, 128};
  int descriptor_dim = 64;
  int dkd_radius = 2;
  float dkd_temperature = 0.1f;
  float score_threshold = 0.1f;
  int train_detected = 400;
  int train_random = 400;
  int eval_max_keypoints = 1024;
  int random_border = 4;

  void validate() const;
  nlohmann::json to_json() const;
  static HyKeyConfig from_json(const nlohmann::json& j, const std::string& path = "model");
  bool operator==(const HyKeyConfig&) const = default;
};

struct Parameter {
  std::string name;
  Tensor value;
};

struct EncoderBlocks {
  std::array<Tensor, 3> blocks;  // [c_i, S_i, H/2^i, W/2^i]
};

struct DenseOutput {
  EncoderBlocks encoder;
  Tensor aggregated;      // [c1+c2+c3, H, W]
  Tensor score_map;       // [H, W], in (0,1)
  Tensor descriptor_map;  // [D, H, W], unit norm per pixel
};

enum class Mode { kTrain, kEval };

struct Keypoints {
  Tensor points;  // [N, 2] sub-pixel (x, y)
  Tensor scores;  // [N], score map sampled at the points
  std::vector<PixelIndex> pixels;  // integer window centres
  std::size_t detected = 0;        // leading entries from NMS; the rest are random
};

struct NetworkOutput {
  DenseOutput dense;
  Keypoints keypoints;
  Tensor descriptors;  // [N, D], unit norm rows
};

// Per-cube min-max normalisation into a [1, bands, H, W] tensor.
Tensor prepare_input(const hsi::HsiCube& cube);

class HyKeyNetwork {
 public:
  explicit HyKeyNetwork(HyKeyConfig config = {}, std::uint64_t seed = 0);

  const HyKeyConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  BatchNormState& batchnorm_state() { return bn_; }
  const BatchNormState& batchnorm_state() const { return bn_; }
  void set_requires_grad(bool value);
  void zero_grad();

  // input [1, bands, H, W] with H, W divisible by 8.
  EncoderBlocks encode(const Tensor& input) const;
  Tensor aggregate(const EncoderBlocks& encoder, std::int64_t height, std::int64_t width) const;
  // Returns the raw D+1 channel head output.
  Tensor head(const Tensor& aggregated, bool training);
  // Reflect-pads to a multiple of 8 and crops the maps back.
  DenseOutput dense_forward(const Tensor& input, bool training);

  // Train mode draws the random keypoints from `seed`, restricted to pixels
  // flagged in `valid` (row-major, H*W) when given.
  NetworkOutput forward(const Tensor& input, Mode mode, std::uint64_t seed = 0,
                        const std::vector<std::uint8_t>* valid = nullptr);
  NetworkOutput forward(const hsi::HsiCube& cube, Mode mode, std::uint64_t seed = 0,
                        const std::vector<std::uint8_t>* valid = nullptr);

  std::size_t parameter_count() const;

 private:
  const Tensor& param(std::size_t index) const { return params_[index].value; }

  HyKeyConfig config_;
  std::vector<Parameter> params_;
  BatchNormState bn_;
};

// ---- differentiable keypoint detection -------------------------------------

// Strict local maxima of `scores` ([H,W]) over the (2r+1)^2 window; equal
// scores are resolved in favour of the lower row-major index. Pixels closer
// than `border` to the edge are skipped. Sorted by score descending.
std::vector<PixelIndex> nms_maxima(const Tensor& scores, int radius, int border, float threshold,
                                   std::size_t max_count);

// Soft-argmax refinement: centre + E[offset] under softmax(window / T).
Tensor soft_argmax_refine(const Tensor& score_map, std::span<const PixelIndex> centres, int radius,
                          float temperature);

Keypoints dkd_detect(const Tensor& score_map, Mode mode, const HyKeyConfig& config, std::uint64_t seed = 0,
                     const std::vector<std::uint8_t>* valid = nullptr);

}  // namespace hykey::model
