#include "hykey/model.hpp"

#include <cmath>

#include "detail/random.hpp"
#include "hykey/config.hpp"
#include "hykey/error.hpp"

namespace hykey::model {

void HyKeyConfig::validate() const {
  for (int c : channels) {
    if (c < 1) fail(ErrorCode::kConfig, "model.channels must be positive");
  }
  if (descriptor_dim < 8) fail(ErrorCode::kConfig, "model.descriptor_dim must be >= 8");
  if (dkd_radius < 1) fail(ErrorCode::kConfig, "model.dkd_radius must be >= 1");
  if (!(dkd_temperature > 0.0f)) fail(ErrorCode::kConfig, "model.dkd_temperature must be > 0");
  if (train_detected < 0 || train_random < 0 || eval_max_keypoints < 0 || random_border < 0) {
    fail(ErrorCode::kConfig, "model keypoint counts and border must be non-negative");
  }
}

nlohmann::json HyKeyConfig::to_json() const {
  return {{"channels", channels},
          {"descriptor_dim", descriptor_dim},
          {"dkd_radius", dkd_radius},
          {"dkd_temperature", dkd_temperature},
          {"score_threshold", score_threshold},
          {"train_detected", train_detected},
          {"train_random", train_random},
          {"eval_max_keypoints", eval_max_keypoints},
          {"random_border", random_border}};
}

HyKeyConfig HyKeyConfig::from_json(const nlohmann::json& j, const std::string& path) {
  const config::Reader r(j, path);
  r.require_known({"channels", "descriptor_dim", "dkd_radius", "dkd_temperature", "score_threshold",
                   "train_detected", "train_random", "eval_max_keypoints", "random_border"});
  HyKeyConfig c;
  c.channels = r.get("channels", c.channels);
  c.descriptor_dim = r.get("descriptor_dim", c.descriptor_dim);
  c.dkd_radius = r.get("dkd_radius", c.dkd_radius);
  c.dkd_temperature = r.get("dkd_temperature", c.dkd_temperature);
  c.score_threshold = r.get("score_threshold", c.score_threshold);
  c.train_detected = r.get("train_detected", c.train_detected);
  c.train_random = r.get("train_random", c.train_random);
  c.eval_max_keypoints = r.get("eval_max_keypoints", c.eval_max_keypoints);
  c.random_border = r.get("random_border", c.random_border);
  c.validate();
  return c;
}

Tensor prepare_input(const hsi::HsiCube& cube) {
  hsi::HsiCube copy = cube;
  copy.normalise();
  return copy.to_tensor();
}

namespace {

enum ParamIndex : std::size_t {
  kEnc1A = 0,  // each conv contributes weight, bias
  kHeadConv1 = 12,
  kHeadGamma = 14,
  kHeadBeta = 15,
  kHeadConv2 = 16,
};

Tensor kaiming_uniform(Shape shape, std::int64_t fan_in, detail::Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (float& v : t.mutable_data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Tensor reflect_pad(const Tensor& x, std::int64_t ph, std::int64_t pw) {
  const std::int64_t c = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({x.dim(0), x.dim(1), h + ph, w + pw});
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::int64_t k = 0; k < c; ++k) {
    for (std::int64_t y = 0; y < h + ph; ++y) {
      for (std::int64_t xx = 0; xx < w + pw; ++xx) {
        dst[(k * (h + ph) + y) * (w + pw) + xx] = src[(k * h + reflect(y, h)) * w + reflect(xx, w)];
      }
    }
  }
  return out;
}

}  // namespace

HyKeyNetwork::HyKeyNetwork(HyKeyConfig config, std::uint64_t seed)
    : config_(config), bn_(static_cast<std::size_t>(config.descriptor_dim)) {
  config_.validate();
  detail::Rng rng(seed);
  const auto& c = config_.channels;
  const std::array<int, 3> in{1, c[0], c[1]};
  for (int b = 0; b < 3; ++b) {
    const std::string prefix = "encoder" + std::to_string(b + 1);
    params_.push_back({prefix + ".conv_a.weight", kaiming_uniform({c[b], in[b], 3, 3, 3}, in[b] * 27, rng)});
    params_.push_back({prefix + ".conv_a.bias", Tensor({c[b]})});
    params_.push_back({prefix + ".conv_b.weight", kaiming_uniform({c[b], c[b], 3, 3, 3}, c[b] * 27, rng)});
    params_.push_back({prefix + ".conv_b.bias", Tensor({c[b]})});
  }
  const int agg = c[0] + c[1] + c[2];
  const int d = config_.descriptor_dim;
  params_.push_back({"head.conv1.weight", kaiming_uniform({d, agg, 3, 3}, agg * 9, rng)});
  params_.push_back({"head.conv1.bias", Tensor({d})});
  params_.push_back({"head.bn.gamma", Tensor({d}, 1.0f)});
  params_.push_back({"head.bn.beta", Tensor({d})});
  params_.push_back({"head.conv2.weight", kaiming_uniform({d + 1, d, 3, 3}, d * 9, rng)});
  params_.push_back({"head.conv2.bias", Tensor({d + 1})});
}

void HyKeyNetwork::set_requires_grad(bool value) {
  for (auto& p : params_) p.value.set_requires_grad(value);
}

void HyKeyNetwork::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

std::size_t HyKeyNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.numel());
  return n;
}

EncoderBlocks HyKeyNetwork::encode(const Tensor& input) const {
  if (input.rank() != 4 || input.dim(0) != 1) fail(ErrorCode::kDimension, "encoder expects [1, bands, H, W]");
  if (input.dim(1) < 4) fail(ErrorCode::kUnsupportedInput, "at least 4 spectral bands are required");
  if (input.dim(2) % 8 != 0 || input.dim(3) % 8 != 0) {
    fail(ErrorCode::kDimension, "encoder input extents must be divisible by 8");
  }
  EncoderBlocks out;
  Tensor x = input;
  const Stride3 spectral_halving{2, 1, 1};
  for (std::size_t b = 0; b < 3; ++b) {
    const std::size_t base = kEnc1A + 4 * b;
    x = relu(conv3d(x, param(base), param(base + 1), spectral_halving));
    x = relu(conv3d(x, param(base + 2), param(base + 3), spectral_halving));
    x = maxpool_spatial(x);
    out.blocks[b] = x;
  }
  return out;
}

Tensor HyKeyNetwork::aggregate(const EncoderBlocks& encoder, std::int64_t height, std::int64_t width) const {
  std::vector<Tensor> parts;
  for (const auto& block : encoder.blocks) parts.push_back(upsample_bilinear(spectral_mean(block), height, width));
  return concat(parts);
}

Tensor HyKeyNetwork::head(const Tensor& aggregated, bool training) {
  Tensor x = conv2d(aggregated, param(kHeadConv1), param(kHeadConv1 + 1));
  x = relu(batchnorm2d(x, param(kHeadGamma), param(kHeadBeta), bn_, training));
  return conv2d(x, param(kHeadConv2), param(kHeadConv2 + 1));
}

DenseOutput HyKeyNetwork::dense_forward(const Tensor& input, bool training) {
  if (input.rank() != 4) fail(ErrorCode::kDimension, "network input must be [1, bands, H, W]");
  const std::int64_t h = input.dim(2), w = input.dim(3);
  const std::int64_t ph = (8 - h % 8) % 8, pw = (8 - w % 8) % 8;
  const Tensor padded = (ph || pw) ? reflect_pad(input, ph, pw) : input;

  DenseOutput out;
  out.encoder = encode(padded);
  Tensor agg = aggregate(out.encoder, h + ph, w + pw);
  Tensor raw = head(agg, training);
  if (ph || pw) {
    agg = crop2d(agg, h, w);
    raw = crop2d(raw, h, w);
  }
  out.aggregated = agg;
  const std::int64_t d = config_.descriptor_dim;
  out.score_map = reshape(sigmoid(narrow(raw, 0, 1)), {h, w});
  out.descriptor_map = l2_normalize(narrow(raw, 1, d), 0).value;
  return out;
}

NetworkOutput HyKeyNetwork::forward(const Tensor& input, Mode mode, std::uint64_t seed,
                                    const std::vector<std::uint8_t>* valid) {
  NetworkOutput out;
  out.dense = dense_forward(input, mode == Mode::kTrain);
  out.keypoints = dkd_detect(out.dense.score_map, mode, config_, seed, valid);
  out.descriptors = l2_normalize(grid_sample2d(out.dense.descriptor_map, out.keypoints.points), 1).value;
  return out;
}

NetworkOutput HyKeyNetwork::forward(const hsi::HsiCube& cube, Mode mode, std::uint64_t seed,
                                    const std::vector<std::uint8_t>* valid) {
  return forward(prepare_input(cube), mode, seed, valid);
}

}  // namespace hykey::model
