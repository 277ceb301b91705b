#include "grad_suite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hykey/geometry.hpp"
#include "hykey/losses.hpp"
#include "hykey/model.hpp"
#include "hykey/ops.hpp"

namespace hykey::testing {

namespace {

using V = std::vector<Tensor>;

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t k) { return seed * 7919u + k * 104729u + 1u; }

Tensor uniform(const Shape& s, std::uint64_t seed, float lo, float hi) { return random_tensor(s, seed, lo, hi); }

// Distinct values spaced 0.05 apart in random order, so max-pool winners are
// stable under small perturbations.
Tensor spaced(const Shape& s, std::uint64_t seed) {
  std::vector<float> v(static_cast<std::size_t>(shape_numel(s)));
  std::iota(v.begin(), v.end(), 0.0f);
  std::mt19937_64 rng(seed);
  std::shuffle(v.begin(), v.end(), rng);
  for (float& x : v) x = 0.05f * x - 1.0f;
  return Tensor(s, std::move(v));
}

// Sub-pixel points with fractional parts in [0.2, 0.8] inside [0, w-1]x[0, h-1].
Tensor interior_points(std::int64_t n, std::int64_t h, std::int64_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> xi(0, w - 2), yi(0, h - 2);
  std::uniform_real_distribution<float> frac(0.2f, 0.8f);
  std::vector<float> v;
  for (std::int64_t i = 0; i < n; ++i) {
    v.push_back(static_cast<float>(xi(rng)) + frac(rng));
    v.push_back(static_cast<float>(yi(rng)) + frac(rng));
  }
  return Tensor({n, 2}, std::move(v));
}

Tensor unit_rows(std::int64_t n, std::int64_t d, std::uint64_t seed) {
  return l2_normalize(uniform({n, d}, seed, -1.0f, 1.0f), 1).value;
}

GradInstance unary(std::uint64_t seed, Tensor (*op)(const Tensor&), float lo, float hi) {
  return {[op](const V& in) { return op(in[0]); }, {uniform({3, 4}, seed, lo, hi)}, {}};
}

losses::LossSettings settings() { return losses::LossSettings{}; }

geometry::Homography test_homography(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  geometry::Mat3 m;
  m << 1.0 + 0.05 * u(rng), 0.05 * u(rng), 1.5 * u(rng), 0.05 * u(rng), 1.0 + 0.05 * u(rng), 1.5 * u(rng),
      1e-3 * u(rng), 1e-3 * u(rng), 1.0;
  return geometry::Homography::from_matrix(m);
}

struct PoseSetup {
  geometry::Intrinsics k0, k2;
  geometry::Mat3 f;
};

PoseSetup pose_setup(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PoseSetup p;
  p.k0 = {28.8, 28.8, 15.5, 15.5};
  p.k2 = {30.0, 29.0, 16.0, 15.0};
  geometry::RelativePose pose;
  pose.rotation = geometry::rotation_from_axis_angle(geometry::Vec3(u(rng), u(rng), u(rng)), 0.1 * u(rng));
  pose.translation = geometry::Vec3(1.0 + 0.3 * u(rng), 0.3 * u(rng), 0.2 * u(rng));
  p.f = geometry::compose_fundamental(p.k0, p.k2, pose).m;
  return p;
}

const std::vector<GradCase> kCases = {
    {"relu", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return relu(in[0]); }, {random_away_from_zero({3, 5}, s)}, {}};
     }},
    {"sigmoid", +[](std::uint64_t s) { return unary(s, &sigmoid, -3.0f, 3.0f); }},
    {"exp", +[](std::uint64_t s) { return unary(s, &hykey::exp, -1.0f, 1.0f); }},
    {"log", +[](std::uint64_t s) { return unary(s, &hykey::log, 0.5f, 2.0f); }},
    {"sqrt", +[](std::uint64_t s) { return unary(s, &hykey::sqrt, 0.5f, 2.0f); }},
    {"square", +[](std::uint64_t s) { return unary(s, &square, -2.0f, 2.0f); }},
    {"neg", +[](std::uint64_t s) { return unary(s, &neg, -2.0f, 2.0f); }},
    {"scale", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return scale(in[0], -1.7f); }, {uniform({4}, s, -1, 1)}, {}};
     }},
    {"add_scalar", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return add_scalar(in[0], 0.3f); }, {uniform({4}, s, -1, 1)}, {}};
     }},
    {"huber", +[](std::uint64_t s) {
       // delta 0.5; values kept out of [0.4, 0.6] in magnitude.
       std::mt19937_64 rng(s);
       std::uniform_real_distribution<float> a(0.0f, 0.4f), b(0.6f, 2.0f);
       std::vector<float> v;
       for (int i = 0; i < 12; ++i) v.push_back((i % 2 ? a(rng) : b(rng)) * (i % 3 ? 1.0f : -1.0f));
       return GradInstance{[](const V& in) { return huber(in[0], 0.5f); }, {Tensor({12}, v)}, {}};
     }},
    {"binary_cross_entropy", +[](std::uint64_t s) {
       const Tensor target = uniform({6}, sub_seed(s, 1), 0.0f, 1.0f);
       return GradInstance{[target](const V& in) { return binary_cross_entropy(in[0], target.data()); },
                           {uniform({6}, s, 0.1f, 0.9f)},
                           {}};
     }},
    {"add_broadcast", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return add(in[0], in[1]); },
                           {uniform({3, 4}, s, -1, 1), uniform({1, 4}, sub_seed(s, 1), -1, 1)},
                           {}};
     }},
    {"sub_broadcast", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return sub(in[0], in[1]); },
                           {uniform({3, 1}, s, -1, 1), uniform({3, 4}, sub_seed(s, 1), -1, 1)},
                           {}};
     }},
    {"mul_broadcast", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return mul(in[0], in[1]); },
                           {uniform({2, 3, 4}, s, -1, 1), uniform({3, 1}, sub_seed(s, 1), -1, 1)},
                           {}};
     }},
    {"div", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return div(in[0], in[1]); },
                           {uniform({3, 4}, s, -1, 1), uniform({3, 4}, sub_seed(s, 1), 0.5f, 2.0f)},
                           {}};
     }},
    {"sum", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return sum(in[0]); }, {uniform({3, 4}, s, -1, 1)}, {}};
     }},
    {"mean", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return mean(in[0]); }, {uniform({3, 4}, s, -1, 1)}, {}};
     }},
    {"sum_axis", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return sum_axis(in[0], 1); }, {uniform({2, 3, 4}, s, -1, 1)}, {}};
     }},
    {"softmax", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return softmax(in[0], 0); }, {uniform({4, 5}, s, -2, 2)}, {}};
     }},
    {"log_softmax", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return log_softmax(in[0], 1); }, {uniform({4, 5}, s, -2, 2)}, {}};
     }},
    {"l2_normalize", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return l2_normalize(in[0], 0).value; }, {uniform({5, 3}, s, -1, 1)}, {}};
     }},
    {"reshape", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return reshape(in[0], {4, 3}); }, {uniform({3, 4}, s, -1, 1)}, {}};
     }},
    {"transpose2d", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return transpose2d(in[0]); }, {uniform({3, 4}, s, -1, 1)}, {}};
     }},
    {"concat", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return concat(std::vector<Tensor>{in[0], in[1]}); },
                           {uniform({2, 3}, s, -1, 1), uniform({1, 3}, sub_seed(s, 1), -1, 1)},
                           {}};
     }},
    {"narrow", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return narrow(in[0], 1, 2); }, {uniform({4, 3}, s, -1, 1)}, {}};
     }},
    {"crop2d", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return crop2d(in[0], 3, 2); }, {uniform({2, 4, 5}, s, -1, 1)}, {}};
     }},
    {"index_select", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return index_select(in[0], std::vector<std::int64_t>{2, 0, 2}); },
                           {uniform({3, 4}, s, -1, 1)},
                           {}};
     }},
    {"take", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return take(in[0], std::vector<std::int64_t>{5, 1, 5, 11}); },
                           {uniform({3, 4}, s, -1, 1)},
                           {}};
     }},
    {"matmul", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return matmul(in[0], in[1]); },
                           {uniform({3, 4}, s, -1, 1), uniform({4, 2}, sub_seed(s, 1), -1, 1)},
                           {}};
     }},
    {"matmul_nt", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return matmul_nt(in[0], in[1]); },
                           {uniform({3, 4}, s, -1, 1), uniform({5, 4}, sub_seed(s, 1), -1, 1)},
                           {}};
     }},
    {"conv3d_stride2", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return conv3d(in[0], in[1], in[2], Stride3{2, 1, 1}); },
                           {uniform({2, 4, 4, 5}, s, -1, 1), uniform({3, 2, 3, 3, 3}, sub_seed(s, 1), -0.3f, 0.3f),
                            uniform({3}, sub_seed(s, 2), -0.1f, 0.1f)},
                           {}};
     }},
    {"conv3d_stride1", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return conv3d(in[0], in[1], in[2], Stride3{}); },
                           {uniform({2, 1, 4, 4}, s, -1, 1), uniform({2, 2, 3, 3, 3}, sub_seed(s, 1), -0.3f, 0.3f),
                            uniform({2}, sub_seed(s, 2), -0.1f, 0.1f)},
                           {}};
     }},
    {"conv2d", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return conv2d(in[0], in[1], in[2]); },
                           {uniform({2, 5, 4}, s, -1, 1), uniform({3, 2, 3, 3}, sub_seed(s, 1), -0.3f, 0.3f),
                            uniform({3}, sub_seed(s, 2), -0.1f, 0.1f)},
                           {}};
     }},
    {"maxpool_spatial", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return maxpool_spatial(in[0]); }, {spaced({2, 2, 4, 5}, s)}, {}};
     }},
    {"spectral_mean", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return spectral_mean(in[0]); }, {uniform({2, 3, 3, 4}, s, -1, 1)}, {}};
     }},
    {"upsample_bilinear", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return upsample_bilinear(in[0], 7, 9); }, {uniform({2, 3, 4}, s, -1, 1)},
                           {}};
     }},
    {"batchnorm2d", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) {
                             BatchNormState state(3);
                             return batchnorm2d(in[0], in[1], in[2], state, true);
                           },
                           {uniform({3, 4, 5}, s, -1, 1), uniform({3}, sub_seed(s, 1), 0.5f, 1.5f),
                            uniform({3}, sub_seed(s, 2), -0.5f, 0.5f)},
                           {}};
     }},
    {"grid_sample2d", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) { return grid_sample2d(in[0], in[1]); },
                           {uniform({3, 6, 7}, s, -1, 1), interior_points(5, 6, 7, sub_seed(s, 1))},
                           {}};
     }},
    {"gather_windows", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) {
                             const std::vector<PixelIndex> c{{0, 0}, {3, 2}, {6, 5}, {4, 4}};
                             return gather_windows(in[0], c, 2);
                           },
                           {uniform({6, 7}, s, -1, 1)},
                           {}};
     }},
    {"project_homography", +[](std::uint64_t s) {
       const auto h = test_homography(sub_seed(s, 3)).row_major();
       return GradInstance{[h](const V& in) { return project_homography(in[0], h); },
                           {uniform({5, 2}, s, 0.0f, 30.0f)},
                           {}};
     }},
    {"sampson_pairwise", +[](std::uint64_t s) {
       const auto setup = pose_setup(sub_seed(s, 3));
       Mat3 f;
       for (int i = 0; i < 9; ++i) f[i] = setup.f(i / 3, i % 3);
       return GradInstance{[f](const V& in) { return sampson_pairwise(f, in[0], in[1]); },
                           {uniform({4, 2}, s, 0.0f, 31.0f), uniform({3, 2}, sub_seed(s, 1), 0.0f, 31.0f)},
                           {}};
     }},
    {"soft_argmax_refine", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) {
                             const std::vector<PixelIndex> c{{2, 2}, {5, 3}, {4, 6}};
                             return model::soft_argmax_refine(in[0], c, 2, 0.1f);
                           },
                           {uniform({8, 8}, s, 0.0f, 1.0f)},
                           {}};
     }},
    {"loss_pk", +[](std::uint64_t s) {
       // Score map, refined points and point scores all carry gradients.
       return GradInstance{[](const V& in) {
                             model::Keypoints kp;
                             kp.pixels = {{2, 3}, {6, 6}, {7, 2}, {3, 7}};
                             kp.points = add(in[1], Tensor({4, 2}, std::vector<float>{2, 3, 6, 6, 7, 2, 3, 7}));
                             kp.scores = in[2];
                             kp.detected = 4;
                             return losses::loss_pk(in[0], kp, settings()).value;
                           },
                           {uniform({10, 10}, s, 0.0f, 1.0f), uniform({4, 2}, sub_seed(s, 1), -0.8f, 0.8f),
                            uniform({4}, sub_seed(s, 2), 0.0f, 0.3f)},
                           {}};
     }},
    {"loss_rp", +[](std::uint64_t s) {
       const auto h = test_homography(sub_seed(s, 3));
       std::mt19937_64 rng(s);
       // Reprojection offsets of 0.2-0.7 or 1.3-2.5 px stay clear of the
       // Huber delta of 1 px.
       std::uniform_real_distribution<double> small(0.2, 0.7), large(1.3, 2.5), angle(0.0, 6.283185307179586);
       std::vector<float> p0, p1;
       for (int i = 0; i < 6; ++i) {
         const geometry::Vec2 p(4.0 + 9.0 * (i % 3), 5.0 + 12.0 * (i / 3));
         const double r = i % 2 ? small(rng) : large(rng);
         const double a = angle(rng);
         const geometry::Vec2 q = geometry::apply_homography(h, p) + r * geometry::Vec2(std::cos(a), std::sin(a));
         p0.push_back(static_cast<float>(p.x()));
         p0.push_back(static_cast<float>(p.y()));
         p1.push_back(static_cast<float>(q.x()));
         p1.push_back(static_cast<float>(q.y()));
       }
       return GradInstance{[h](const V& in) { return losses::loss_rp(in[0], in[1], in[2], in[3], h, settings()).value; },
                           {Tensor({6, 2}, p0), uniform({6}, sub_seed(s, 1), 0.0f, 0.3f), Tensor({6, 2}, p1),
                            uniform({6}, sub_seed(s, 2), 0.0f, 0.3f)},
                           {}};
     }},
    {"loss_rel", +[](std::uint64_t s) {
       // The similarities only build the target, so they are held constant.
       return GradInstance{[](const V& in) {
                             losses::Labels labels{{1, -1, 0, 3, 2}};
                             return losses::loss_rel(in[0], in[1], in[2], labels, settings()).value;
                           },
                           {uniform({5}, s, 0.1f, 0.9f), uniform({4}, sub_seed(s, 1), 0.1f, 0.9f),
                            matmul_nt(unit_rows(5, 8, sub_seed(s, 2)), unit_rows(4, 8, sub_seed(s, 3)))},
                           {true, true, false}};
     }},
    {"loss_desc", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) {
                             losses::Labels labels{{1, -1, 0, 3, 2}};
                             return losses::loss_desc(in[0], labels, 0.02f).value;
                           },
                           {scale(uniform({5, 4}, s, -1.0f, 1.0f), 0.05f)},
                           {}};
     }},
    {"loss_desc_through_descriptors", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) {
                             losses::Labels labels{{2, 0, -1, 1}};
                             const Tensor d0 = l2_normalize(in[0], 1).value;
                             const Tensor d1 = l2_normalize(in[1], 1).value;
                             return losses::loss_desc(matmul_nt(d0, d1), labels, 0.5f).value;
                           },
                           {uniform({4, 6}, s, -1, 1), uniform({3, 6}, sub_seed(s, 1), -1, 1)},
                           {}};
     }},
    {"loss_epi", +[](std::uint64_t s) {
       const auto setup = pose_setup(sub_seed(s, 3));
       auto st = settings();
       st.epipolar_temperature = 0.2f;  // keeps the softmax away from saturation
       st.huber_epipolar = 50.0f;       // quadratic regime, no kink in range
       return GradInstance{[setup, st](const V& in) {
                             return losses::loss_epi(in[0], in[1], in[2], setup.f, setup.k0, setup.k2, st).value;
                           },
                           {uniform({4, 2}, s, 0.0f, 31.0f), uniform({5, 2}, sub_seed(s, 1), 0.0f, 31.0f),
                            uniform({4, 5}, sub_seed(s, 2), -1.0f, 1.0f)},
                           {}};
     }},
    {"total_loss", +[](std::uint64_t s) {
       return GradInstance{[](const V& in) {
                             losses::LossTerms t;
                             t.pk = {sum(square(narrow(in[0], 0, 1))), false};
                             t.rp = {sum(square(narrow(in[0], 1, 1))), false};
                             t.rel = {sum(square(narrow(in[0], 2, 1))), false};
                             t.desc = {sum(square(narrow(in[0], 3, 1))), false};
                             t.epi = losses::Term{sum(square(narrow(in[0], 4, 1))), false};
                             return losses::total_loss(t, losses::LossWeights{}, 6, 5, true).total;
                           },
                           {uniform({5}, s, -1, 1)},
                           {}};
     }},
};

}  // namespace

const std::vector<GradCase>& gradient_suite() { return kCases; }

}  // namespace hykey::testing
