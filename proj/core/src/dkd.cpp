#include <algorithm>
#include <limits>
#include <numeric>

#include "detail/random.hpp"
#include "hykey/error.hpp"
#include "hykey/model.hpp"

namespace hykey::model {

std::vector<PixelIndex> nms_maxima(const Tensor& scores, int radius, int border, float threshold,
                                   std::size_t max_count) {
  if (scores.rank() != 2) fail(ErrorCode::kDimension, "score map must be [H, W]");
  const std::int64_t h = scores.dim(0), w = scores.dim(1);
  auto s = scores.data();
  std::vector<std::int64_t> kept;
  for (std::int64_t y = border; y < h - border; ++y) {
    for (std::int64_t x = border; x < w - border; ++x) {
      const std::int64_t idx = y * w + x;
      const float v = s[idx];
      if (!(v > threshold)) continue;
      bool is_max = true;
      for (std::int64_t yy = std::max<std::int64_t>(0, y - radius); is_max && yy <= std::min(h - 1, y + radius); ++yy) {
        for (std::int64_t xx = std::max<std::int64_t>(0, x - radius); xx <= std::min(w - 1, x + radius); ++xx) {
          const std::int64_t j = yy * w + xx;
          if (j == idx) continue;
          if (s[j] > v || (s[j] == v && j < idx)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) kept.push_back(idx);
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [&](std::int64_t a, std::int64_t b) { return s[a] > s[b]; });
  if (kept.size() > max_count) kept.resize(max_count);
  std::vector<PixelIndex> out;
  out.reserve(kept.size());
  for (auto idx : kept) out.push_back({idx % w, idx / w});
  return out;
}

Tensor soft_argmax_refine(const Tensor& score_map, std::span<const PixelIndex> centres, int radius,
                          float temperature) {
  const auto n = static_cast<std::int64_t>(centres.size());
  if (n == 0) return Tensor({0, 2});
  const int side = 2 * radius + 1;
  std::vector<float> offsets;
  offsets.reserve(static_cast<std::size_t>(side * side * 2));
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      offsets.push_back(static_cast<float>(dx));
      offsets.push_back(static_cast<float>(dy));
    }
  }
  std::vector<float> base;
  base.reserve(static_cast<std::size_t>(n * 2));
  for (const auto& c : centres) {
    base.push_back(static_cast<float>(c.x));
    base.push_back(static_cast<float>(c.y));
  }
  const Tensor windows = gather_windows(score_map, centres, radius);
  const Tensor weights = softmax(scale(windows, 1.0f / temperature), 1);
  const Tensor expected = matmul(weights, Tensor({side * side, 2}, std::move(offsets)));
  return add(Tensor({n, 2}, std::move(base)), expected);
}

Keypoints dkd_detect(const Tensor& score_map, Mode mode, const HyKeyConfig& config, std::uint64_t seed,
                     const std::vector<std::uint8_t>* valid) {
  const std::int64_t h = score_map.dim(0), w = score_map.dim(1);
  const int r = config.dkd_radius;
  Keypoints kp;
  if (mode == Mode::kEval) {
    kp.pixels = nms_maxima(score_map, r, r, config.score_threshold,
                           static_cast<std::size_t>(config.eval_max_keypoints));
    kp.detected = kp.pixels.size();
  } else {
    kp.pixels = nms_maxima(score_map, r, r, -std::numeric_limits<float>::infinity(),
                           static_cast<std::size_t>(config.train_detected));
    kp.detected = kp.pixels.size();
    std::vector<std::uint8_t> taken(static_cast<std::size_t>(h * w), 0);
    for (const auto& p : kp.pixels) taken[p.y * w + p.x] = 1;
    std::vector<std::int64_t> candidates;
    const std::int64_t b = config.random_border;
    for (std::int64_t y = b; y < h - b; ++y) {
      for (std::int64_t x = b; x < w - b; ++x) {
        const std::int64_t idx = y * w + x;
        if (taken[idx] || (valid != nullptr && !(*valid)[idx])) continue;
        candidates.push_back(idx);
      }
    }
    detail::Rng rng(seed);
    const std::size_t want = std::min(candidates.size(), static_cast<std::size_t>(config.train_random));
    for (std::size_t i = 0; i < want; ++i) {
      const std::size_t j = i + rng.below(candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
      kp.pixels.push_back({candidates[i] % w, candidates[i] / w});
    }
  }
  kp.points = soft_argmax_refine(score_map, kp.pixels, r, config.dkd_temperature);
  const auto n = static_cast<std::int64_t>(kp.pixels.size());
  kp.scores = reshape(grid_sample2d(reshape(score_map, {1, h, w}), kp.points), {n});
  return kp;
}

}  // namespace hykey::model
