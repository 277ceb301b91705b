#include "hykey/losses.hpp"

#include <cmath>
#include <limits>

#include "hykey/config.hpp"
#include "hykey/error.hpp"
#include "hykey/ops.hpp"

namespace hykey::losses {

using geometry::Homography;
using geometry::Vec2;

void LossWeights::validate() const {
  if (pk < 0 || rp < 0 || rel < 0 || desc < 0 || epi < 0) fail(ErrorCode::kConfig, "loss weights must be >= 0");
}

nlohmann::json LossWeights::to_json() const {
  return {{"pk", pk}, {"rp", rp}, {"rel", rel}, {"desc", desc}, {"epi", epi}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j, const std::string& path) {
  const config::Reader r(j, path);
  r.require_known({"pk", "rp", "rel", "desc", "epi"});
  LossWeights w;
  w.pk = r.get("pk", w.pk);
  w.rp = r.get("rp", w.rp);
  w.rel = r.get("rel", w.rel);
  w.desc = r.get("desc", w.desc);
  w.epi = r.get("epi", w.epi);
  w.validate();
  return w;
}

LossSettings LossSettings::from(const model::HyKeyConfig& config) {
  LossSettings s;
  s.score_threshold = config.score_threshold;
  s.window_radius = config.dkd_radius;
  s.window_temperature = config.dkd_temperature;
  return s;
}

nlohmann::json LossSettings::to_json() const {
  return {{"score_threshold", score_threshold},
          {"sigmoid_width", sigmoid_width},
          {"window_radius", window_radius},
          {"window_temperature", window_temperature},
          {"reprojection_radius", reprojection_radius},
          {"label_radius", label_radius},
          {"huber_reprojection", huber_reprojection},
          {"huber_epipolar", huber_epipolar},
          {"descriptor_temperature", descriptor_temperature},
          {"epipolar_temperature", epipolar_temperature}};
}

std::size_t Labels::count() const {
  std::size_t n = 0;
  for (auto p : partner) n += p >= 0 ? 1 : 0;
  return n;
}

namespace {

Term zero_term() { return {Tensor::scalar(0.0f), true}; }

std::vector<Vec2> to_points(const Tensor& t) {
  auto d = t.data();
  std::vector<Vec2> out(static_cast<std::size_t>(t.dim(0)));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Vec2(d[2 * i], d[2 * i + 1]);
  return out;
}

std::vector<Vec2> project_all(const std::vector<Vec2>& pts, const Homography& h) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(geometry::apply_homography(h, p));
  return out;
}

// Index of the nearest target point within radius, or -1.
std::int64_t nearest(const Vec2& p, const std::vector<Vec2>& targets, double radius) {
  std::int64_t best = -1;
  double best_d = radius * radius;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const double d = (targets[j] - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::int64_t>(j);
    }
  }
  return best;
}

Tensor confidence(const Tensor& scores, const LossSettings& s) {
  return sigmoid(scale(add_scalar(scores, -s.score_threshold), 1.0f / s.sigmoid_width));
}

// One direction of the reprojection term: returns nullopt with no pairs.
std::optional<Tensor> reprojection_direction(const Tensor& pa, const Tensor& sa, const Tensor& pb, const Tensor& sb,
                                             const Homography& h, const LossSettings& s) {
  const auto a = to_points(pa);
  const auto b = to_points(pb);
  const auto proj = project_all(a, h);
  std::vector<std::int64_t> rows, cols;
  for (std::size_t i = 0; i < proj.size(); ++i) {
    const auto j = nearest(proj[i], b, s.reprojection_radius);
    if (j < 0) continue;
    rows.push_back(static_cast<std::int64_t>(i));
    cols.push_back(j);
  }
  if (rows.empty()) return std::nullopt;
  const Tensor projected = project_homography(index_select(pa, rows), h.row_major());
  const Tensor diff = sub(projected, index_select(pb, cols));
  const Tensor dist = sqrt(add_scalar(sum_axis(square(diff), 1), 1e-12f));
  const Tensor weight = mul(take(confidence(sa, s), rows), take(confidence(sb, s), cols));
  return mean(mul(huber(dist, s.huber_reprojection), weight));
}

}  // namespace

Labels homography_labels(const Tensor& points0, const Tensor& points1, const Homography& h01, float radius) {
  const auto p0 = to_points(points0);
  const auto p1 = to_points(points1);
  const auto fwd = project_all(p0, h01);
  const auto back = project_all(p1, h01.inverse());
  Labels labels;
  labels.partner.assign(p0.size(), -1);
  for (std::size_t i = 0; i < p0.size(); ++i) {
    const auto j = nearest(fwd[i], p1, radius);
    if (j < 0) continue;
    if (nearest(back[static_cast<std::size_t>(j)], p0, radius) == static_cast<std::int64_t>(i)) labels.partner[i] = j;
  }
  return labels;
}

Term loss_pk(const Tensor& score_map, const model::Keypoints& kp, const LossSettings& s) {
  const auto n = static_cast<std::int64_t>(kp.pixels.size());
  if (n == 0) return zero_term();
  const int r = s.window_radius;
  const int side = 2 * r + 1;
  std::vector<float> offsets, centres;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      offsets.push_back(static_cast<float>(dx));
      offsets.push_back(static_cast<float>(dy));
    }
  }
  for (const auto& c : kp.pixels) {
    centres.push_back(static_cast<float>(c.x));
    centres.push_back(static_cast<float>(c.y));
  }
  const Tensor windows = gather_windows(score_map, kp.pixels, r);
  const Tensor p = softmax(scale(windows, 1.0f / s.window_temperature), 1);
  // Offset of the refined keypoint from its window centre, [N,1,2].
  const Tensor shift = reshape(sub(kp.points, Tensor({n, 2}, std::move(centres))), {n, 1, 2});
  const Tensor grid({1, side * side, 2}, std::move(offsets));
  const Tensor dist = sqrt(add_scalar(sum_axis(square(sub(grid, shift)), 2), 1e-12f));
  const Tensor dispersion = sum_axis(mul(p, dist), 1);
  return {mean(mul(dispersion, confidence(kp.scores, s))), false};
}

Term loss_rp(const Tensor& points0, const Tensor& scores0, const Tensor& points1, const Tensor& scores1,
             const Homography& h01, const LossSettings& s) {
  const auto fwd = reprojection_direction(points0, scores0, points1, scores1, h01, s);
  const auto bwd = reprojection_direction(points1, scores1, points0, scores0, h01.inverse(), s);
  if (fwd && bwd) return {scale(add(*fwd, *bwd), 0.5f), false};
  if (fwd) return {*fwd, false};
  if (bwd) return {*bwd, false};
  return zero_term();
}

Term loss_rel(const Tensor& scores0, const Tensor& scores1, const Tensor& sim, const Labels& labels,
              const LossSettings& s) {
  const std::int64_t n1 = sim.dim(1);
  std::vector<std::int64_t> rows, cols, flat;
  for (std::size_t i = 0; i < labels.partner.size(); ++i) {
    if (labels.partner[i] < 0) continue;
    rows.push_back(static_cast<std::int64_t>(i));
    cols.push_back(labels.partner[i]);
    flat.push_back(static_cast<std::int64_t>(i) * n1 + labels.partner[i]);
  }
  if (rows.empty()) return zero_term();
  const Tensor logits = scale(sim.detach(), 1.0f / s.descriptor_temperature);
  const Tensor r0 = take(softmax(logits, 1), flat);
  const Tensor r1 = take(softmax(logits, 0), flat);
  const Tensor l0 = mean(binary_cross_entropy(take(scores0, rows), r0.data()));
  const Tensor l1 = mean(binary_cross_entropy(take(scores1, cols), r1.data()));
  return {scale(add(l0, l1), 0.5f), false};
}

Term loss_desc(const Tensor& sim, const Labels& labels, float temperature) {
  const std::int64_t n1 = sim.dim(1);
  std::vector<std::int64_t> flat;
  for (std::size_t i = 0; i < labels.partner.size(); ++i) {
    if (labels.partner[i] >= 0) flat.push_back(static_cast<std::int64_t>(i) * n1 + labels.partner[i]);
  }
  if (flat.empty()) return zero_term();
  const Tensor logits = scale(sim, 1.0f / temperature);
  const Tensor rows = mean(take(log_softmax(logits, 1), flat));
  const Tensor cols = mean(take(log_softmax(logits, 0), flat));
  return {scale(add(rows, cols), -0.5f), false};
}

Term loss_epi(const Tensor& points0, const Tensor& points2, const Tensor& sim, const geometry::Mat3& f02,
              const geometry::Intrinsics& k0, const geometry::Intrinsics& k2, const LossSettings& s) {
  if (points0.dim(0) == 0 || points2.dim(0) == 0) return zero_term();
  const geometry::NormalisedFrame frame(k0, k2);
  const geometry::Mat3 fu = frame.to_normalised2().inverse().transpose() * f02 * frame.to_normalised0().inverse();
  if (!fu.allFinite() || fu.norm() == 0.0) return zero_term();
  const geometry::Mat3 fn = fu / fu.norm();
  const Mat3 f_rows{fn(0, 0), fn(0, 1), fn(0, 2), fn(1, 0), fn(1, 1), fn(1, 2), fn(2, 0), fn(2, 1), fn(2, 2)};

  auto normalise = [&](const Tensor& pts, const geometry::Intrinsics& k) {
    const float sx = static_cast<float>(frame.focal / k.fx), sy = static_cast<float>(frame.focal / k.fy);
    const Tensor gain({1, 2}, std::vector<float>{sx, sy});
    const Tensor shift({1, 2}, std::vector<float>{static_cast<float>(-k.cx * sx), static_cast<float>(-k.cy * sy)});
    return add(mul(pts, gain), shift);
  };
  const Tensor cost = huber(sampson_pairwise(f_rows, normalise(points0, k0), normalise(points2, k2)),
                            s.huber_epipolar);
  const Tensor logits = scale(sim, 1.0f / s.epipolar_temperature);
  const Tensor l0 = mean(sum_axis(mul(softmax(logits, 1), cost), 1));
  const Tensor l1 = mean(sum_axis(mul(softmax(logits, 0), cost), 0));
  return {scale(add(l0, l1), 0.5f), false};
}

nlohmann::json LossBreakdown::to_json() const {
  nlohmann::json j{{"pk", pk},
                   {"rp", rp},
                   {"rel", rel},
                   {"desc", desc},
                   {"epi", epi},
                   {"weights", weights.to_json()},
                   {"weighted",
                    {{"pk", weighted(weights.pk, pk)},
                     {"rp", weighted(weights.rp, rp)},
                     {"rel", weighted(weights.rel, rel)},
                     {"desc", weighted(weights.desc, desc)},
                     {"epi", weighted(weights.epi, epi)}}},
                   {"total", total}};
  if (!warnings.empty()) j["warnings"] = warnings;
  return j;
}

float epipolar_weight(const LossWeights& weights, int epoch, int start_epoch, bool epipolar_enabled) {
  return (epipolar_enabled && epoch > start_epoch) ? weights.epi : 0.0f;
}

TotalLoss total_loss(const LossTerms& terms, const LossWeights& weights, int epoch, int start_epoch,
                     bool epipolar_enabled) {
  TotalLoss out;
  auto& b = out.breakdown;
  b.weights = weights;
  b.weights.epi = terms.epi ? epipolar_weight(weights, epoch, start_epoch, epipolar_enabled) : 0.0f;
  b.pk = terms.pk.value.item();
  b.rp = terms.rp.value.item();
  b.rel = terms.rel.value.item();
  b.desc = terms.desc.value.item();
  if (terms.rp.empty) b.warnings.emplace_back("rp: no reprojection correspondences");
  if (terms.desc.empty) b.warnings.emplace_back("desc: no labelled correspondences");

  Tensor total = add(add(scale(terms.pk.value, weights.pk), scale(terms.rp.value, weights.rp)),
                     add(scale(terms.rel.value, weights.rel), scale(terms.desc.value, weights.desc)));
  if (terms.epi && b.weights.epi > 0.0f) {
    b.epi = terms.epi->value.item();
    if (terms.epi->empty) b.warnings.emplace_back("epi: term skipped");
    total = add(total, scale(terms.epi->value, b.weights.epi));
  }
  out.total = total;
  b.total = total.item();
  return out;
}

}  // namespace hykey::losses
