#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "grad_suite.hpp"
#include "hykey/app/commands.hpp"
#include "hykey/checkpoint.hpp"
#include "hykey/robust.hpp"
#include "testing.hpp"

using namespace hykey;
namespace geo = hykey::geometry;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// ---- 1: gradient suite --------------------------------------------------------

Outcome gradient_suite() {
  int instances = 0, failures = 0;
  double worst = 0.0;
  std::string worst_case;
  for (const auto& c : testing::gradient_suite()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto inst = c.make(seed);
      const auto r = testing::gradcheck(inst.f, inst.inputs, seed, 1e-2, 48, inst.differentiable);
      ++instances;
      const bool ok = r.probes > 0 && r.analytic_norm > 0.0 && r.relative_error < 1e-3;
      if (!ok) {
        ++failures;
        std::cerr << "  " << c.name << " seed " << seed << ": relative error " << r.relative_error << '\n';
      }
      if (r.relative_error > worst) {
        worst = r.relative_error;
        worst_case = c.name;
      }
    }
  }
  return {failures == 0, fmt("%zu cases x 10 seeds, %d failures, worst relative error %.2e (%s)",
                             testing::gradient_suite().size(), failures, worst, worst_case.c_str())};
}

// ---- 2: shape contract --------------------------------------------------------

Outcome shape_contract() {
  model::HyKeyNetwork net({}, 1);
  const Tensor x = testing::random_tensor({1, 16, 272, 512}, 2, 0.0f, 1.0f);
  const auto out = net.dense_forward(x, false);
  const std::array<Shape, 3> expected{Shape{32, 4, 136, 256}, Shape{64, 1, 68, 128}, Shape{128, 1, 34, 64}};
  bool ok = true;
  std::string got;
  for (int i = 0; i < 3; ++i) {
    ok = ok && out.encoder.blocks[i].shape() == expected[i];
    got += shape_to_string(out.encoder.blocks[i].shape()) + " ";
  }
  ok = ok && out.aggregated.shape() == Shape{224, 272, 512};
  ok = ok && out.score_map.shape() == Shape{272, 512};
  ok = ok && out.descriptor_map.shape() == Shape{64, 272, 512};
  got += "agg " + shape_to_string(out.aggregated.shape()) + " score " + shape_to_string(out.score_map.shape()) +
         " desc " + shape_to_string(out.descriptor_map.shape());
  return {ok, got};
}

// ---- 3: geometry oracle -------------------------------------------------------

Outcome geometry_oracle() {
  hsi::SyntheticPairSpec spec;
  spec.mode = hsi::PairMode::kEpipolar;
  spec.height = spec.width = 64;
  double worst_residual = 0.0, worst_pose = 0.0;
  int recovered = 0, pairs = 0;
  geo::RobustOptions o;
  o.threshold = 1.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    spec.seed = seed;
    const auto pair = hsi::generate_epipolar_pair(spec);
    const auto scene = pair.scene();
    const auto f = geo::compose_fundamental(pair.camera0.k, pair.camera2.k, pair.pose02);
    const geo::Mat3 k0inv = pair.camera0.k.matrix().inverse(), k2inv = pair.camera2.k.matrix().inverse();
    geo::Mat3 e = pair.camera2.k.matrix().transpose() * f.m * pair.camera0.k.matrix();
    e /= e.norm();
    geo::CorrespondenceSet matches;
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        const geo::Vec2 p0(2.0 + 3.9 * x + 0.13 * y, 2.0 + 3.9 * y + 0.07 * x);
        const auto p2 = scene.correspond(pair.camera0, pair.camera2, p0, spec.height, spec.width);
        if (!p2) continue;
        matches.push_back({p0, *p2, 1.0});
        const geo::Vec3 x0 = k0inv * p0.homogeneous(), x2 = k2inv * p2->homogeneous();
        worst_residual = std::max(worst_residual, std::abs(x2.dot(e * x0)));
      }
    }
    ++pairs;
    o.seed = seed;
    const auto pose = geo::recover_relative_pose(matches, pair.camera0.k, pair.camera2.k, o);
    const double err = pose ? geo::pose_angular_error(*pose, pair.pose02) : 180.0;
    worst_pose = std::max(worst_pose, err);
    recovered += err < 0.5 ? 1 : 0;
  }
  return {worst_residual < 1e-6 && recovered >= 95,
          fmt("max normalised epipolar residual %.2e over %d pairs; pose < 0.5 deg on %d/100 (worst %.3f deg)",
              worst_residual, pairs, recovered, worst_pose)};
}

// ---- 4: metric sanity ---------------------------------------------------------

Outcome metric_sanity() {
  auto spec = hsi::SyntheticPairSpec::identity(hsi::PairMode::kPlanar);
  spec.seed = 4;
  const auto self = data::synthesize_dataset(spec, 5);
  model::HyKeyNetwork net({}, 3);
  const auto r = app::evaluate_homography(net, self);
  bool ok = true;
  for (int t = 0; t < 5; ++t) {
    ok = ok && r.planar.rep.values[t] == 1.0 && r.planar.mma.values[t] == 1.0 && r.planar.mha.values[t] == 1.0;
  }
  ok = ok && r.planar.rep.auc == 1.0 && r.planar.mma.auc == 1.0 && r.planar.mha.auc == 1.0;
  ok = ok && r.planar.rep.excluded == 0;
  const auto zero = metrics::maa(std::vector<double>(10, 0.0));
  const bool maa_ok = zero[0] == 1.0 && zero[1] == 1.0 && zero[2] == 1.0;

  // Random detections, matches and homographies: every curve is non-decreasing.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int pair = 0; pair < 100; ++pair) {
    metrics::PlanarPairInput in;
    in.id = "r" + std::to_string(pair);
    geo::Mat3 m = geo::rotation_from_axis_angle(geo::Vec3(0, 0, 1), 0.2 * (u(rng) - 0.5));
    m(0, 2) = 10 * (u(rng) - 0.5);
    m(1, 2) = 10 * (u(rng) - 0.5);
    m(2, 0) = 1e-4 * (u(rng) - 0.5);
    m(2, 2) = 1.0;
    const auto h = geo::Homography::from_matrix(m);
    in.geometry = {h, 64, 64, 64, 64, nullptr, nullptr};
    for (int i = 0; i < 40; ++i) {
      const geo::Vec2 p(64 * u(rng), 64 * u(rng));
      const geo::Vec2 q = geo::apply_homography(h, p) + geo::Vec2(30 * (u(rng) - 0.5), 30 * (u(rng) - 0.5)) * u(rng);
      in.kpts0.push_back(p);
      in.kpts1.push_back(q);
      if (u(rng) < 0.7) in.matches.push_back({p, q, 1.0});
    }
    const auto e = metrics::evaluate_planar_pair(in, {});
    for (int t = 1; t < 5; ++t) {
      for (const auto* c : {&e.rep, &e.ms, &e.mma}) {
        if ((*c)[t] && (*c)[t - 1] && *(*c)[t] < *(*c)[t - 1]) ++violations;
      }
      if (e.mha[t] < e.mha[t - 1]) ++violations;
    }
  }
  return {ok && maa_ok && violations == 0,
          fmt("self-pair Rep/MMA/MHA AUC %.3f/%.3f/%.3f; zero-error mAA %.0f/%.0f/%.0f%%; "
              "%d monotonicity violations over 100 random pairs",
              r.planar.rep.auc, r.planar.mma.auc, r.planar.mha.auc, 100 * zero[0], 100 * zero[1], 100 * zero[2],
              violations)};
}

// ---- 5: robust estimation -----------------------------------------------------

constexpr int kSensorWidth = 512, kSensorHeight = 272;

Outcome robust_estimation() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> px(0.0, kSensorWidth), py(0.0, kSensorHeight);
  std::normal_distribution<double> noise(0.0, 0.3);

  int h_ok = 0;
  geo::RobustOptions ho;
  ho.threshold = 3.0;
  for (int trial = 0; trial < 100; ++trial) {
    geo::Mat3 m = geo::rotation_from_axis_angle(geo::Vec3(0, 0, 1), 0.3 * u(rng));
    m *= 1.0 + 0.15 * u(rng);
    m(0, 2) = 30 * u(rng);
    m(1, 2) = 20 * u(rng);
    m(2, 0) = 2e-4 * u(rng);
    m(2, 1) = 2e-4 * u(rng);
    m(2, 2) = 1.0;
    const auto h = geo::Homography::from_matrix(m);
    geo::CorrespondenceSet matches;
    for (int i = 0; i < 100; ++i) {
      const geo::Vec2 p(px(rng), py(rng));
      if (i % 2 == 0) {
        matches.push_back({p, geo::apply_homography(h, p) + geo::Vec2(noise(rng), noise(rng)), 1.0});
      } else {
        matches.push_back({p, geo::Vec2(px(rng), py(rng)), 1.0});
      }
    }
    ho.seed = static_cast<std::uint64_t>(trial);
    const auto fit = geo::estimate_homography_robust(matches, ho);
    if (fit && geo::mean_corner_error(fit->model, h, kSensorWidth, kSensorHeight) < 0.5) ++h_ok;
  }

  int f_ok = 0;
  const geo::Intrinsics k{460, 460, 255.5, 135.5};
  geo::RobustOptions fo;
  fo.threshold = 1.0;
  for (int trial = 0; trial < 100; ++trial) {
    geo::RelativePose truth;
    truth.rotation = geo::rotation_from_axis_angle(geo::Vec3(u(rng), u(rng), u(rng)), 0.1 * u(rng));
    truth.translation = geo::Vec3(u(rng), u(rng), 0.2 * u(rng)).normalized();
    geo::CorrespondenceSet matches;
    while (matches.size() < 100) {
      const geo::Vec3 x0(5.5 * u(rng), 2.9 * u(rng), 10 + 4 * u(rng));
      const geo::Vec3 x2 = truth.rotation * x0 + truth.translation;
      if (x2.z() <= 0) continue;
      geo::Vec2 p2 = (k.matrix() * x2).hnormalized();
      if (matches.size() < 40) {
        const double phi = 3.14159265358979 * u(rng);
        p2 += 5.0 * geo::Vec2(std::cos(phi), std::sin(phi));
      }
      matches.push_back({(k.matrix() * x0).hnormalized(), p2, 1.0});
    }
    std::shuffle(matches.begin(), matches.end(), rng);
    fo.seed = static_cast<std::uint64_t>(trial);
    const auto pose = geo::recover_relative_pose(matches, k, k, fo);
    if (pose && geo::pose_angular_error(*pose, truth) < 2.0) ++f_ok;
  }
  return {h_ok >= 95 && f_ok >= 90,
          fmt("homography corner error < 0.5 px on %d/100 (50%% outliers); "
              "pose error < 2 deg on %d/100 (40%% outliers displaced 5 px)",
              h_ok, f_ok)};
}

// ---- 6: toy training signal ---------------------------------------------------

constexpr int kToyTrainPairs = 500;
constexpr int kToySteps = 200;
constexpr int kToyHeldOut = 50;

Outcome toy_training() {
  hsi::SyntheticPairSpec spec;  // 16 x 32 x 32 planar
  spec.seed = 1000;
  auto train_set = data::synthesize_dataset(spec, kToyTrainPairs);
  spec.seed = 2000;
  const auto held_out = data::synthesize_dataset(spec, kToyHeldOut);

  training::TrainConfig config;  // lr 3e-4, warmup 500, batch 6, default weights
  config.epochs = 100;
  config.max_steps = kToySteps;
  config.seed = 6;

  model::HyKeyNetwork untrained(config.model, config.seed);
  const auto before = app::evaluate_homography(untrained, held_out);

  training::Trainer trainer(config, {std::move(train_set)});
  std::vector<double> totals;
  trainer.run([&](const training::StepLog& s) {
    totals.push_back(s.loss.total);
    if (s.step % 20 == 0) std::cerr << "  step " << s.step << " loss " << s.loss.total << '\n';
  });
  const auto after = app::evaluate_homography(trainer.network(), held_out);

  auto mean = [](auto begin, auto end) { return std::accumulate(begin, end, 0.0) / std::distance(begin, end); };
  const double first = mean(totals.begin(), totals.begin() + 20);
  const double last = mean(totals.end() - 20, totals.end());
  const double rep0 = before.planar.rep.values[1], rep1 = after.planar.rep.values[1];
  const double ms0 = before.planar.ms.values[1], ms1 = after.planar.ms.values[1];
  const bool ok = last < first && rep1 - rep0 >= 0.10 && ms1 - ms0 >= 0.10;
  return {ok, fmt("20-step mean loss %.4f -> %.4f; Rep@3 %.3f -> %.3f (%+.3f); MS@3 %.3f -> %.3f (%+.3f)", first, last,
                  rep0, rep1, rep1 - rep0, ms0, ms1, ms1 - ms0)};
}

// ---- 7: ablation directionality -----------------------------------------------

constexpr int kAblationPairs = 60;
constexpr int kAblationSteps = 150;
constexpr int kAblationEvalPairs = 40;
constexpr int kAblationEvalSize = 96;

double ablation_run(std::uint64_t seed, bool epipolar, const std::vector<data::TrainingTriplet>& train_set,
                    const std::vector<data::TrainingTriplet>& eval_set) {
  training::TrainConfig config;
  config.epipolar = epipolar;
  // Two batches per epoch so the epipolar term switches on after step 10.
  config.epoch_frame_cap = 12;
  config.epochs = 1000;
  config.max_steps = kAblationSteps;
  config.seed = seed;
  training::Trainer trainer(config, {train_set});
  trainer.run([&](const training::StepLog& s) {
    if (s.step % 50 == 0) std::cerr << "  seed " << seed << (epipolar ? " HyKey" : " noPE") << " step " << s.step
                                    << " loss " << s.loss.total << '\n';
  });
  const auto report = app::evaluate_pose(trainer.network(), eval_set);
  return report.pose.maa[1];
}

Outcome ablation() {
  hsi::SyntheticPairSpec eval_spec;
  eval_spec.mode = hsi::PairMode::kEpipolar;
  eval_spec.seed = 5000;
  eval_spec.height = eval_spec.width = kAblationEvalSize;
  const auto eval_set = data::synthesize_dataset(eval_spec, kAblationEvalPairs);

  std::vector<double> full, nope;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    hsi::SyntheticPairSpec spec;  // 16 x 32 x 32 epipolar triplets
    spec.mode = hsi::PairMode::kEpipolar;
    spec.seed = 300 + seed;
    const auto train_set = data::synthesize_dataset(spec, kAblationPairs);
    full.push_back(ablation_run(seed, true, train_set, eval_set));
    nope.push_back(ablation_run(seed, false, train_set, eval_set));
    std::cerr << "  seed " << seed << ": HyKey mAA@10 " << full.back() << ", noPE " << nope.back() << '\n';
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
  };
  const double a = median(full), b = median(nope);
  return {a >= b, fmt("median mAA@10 over 3 seeds: HyKey %.3f vs noPE %.3f (per seed %.3f/%.3f, %.3f/%.3f, %.3f/%.3f)",
                      a, b, full[0], nope[0], full[1], nope[1], full[2], nope[2])};
}

// ---- 8: determinism and formats -----------------------------------------------

Outcome determinism() {
  std::vector<std::string> problems;
  auto expect = [&](bool condition, const std::string& what) {
    if (!condition) problems.push_back(what);
  };

  hsi::SyntheticPairSpec spec;
  spec.mode = hsi::PairMode::kEpipolar;
  spec.seed = 88;
  const auto a = data::synthesize_triplet(spec, 3, "a");
  const auto b = data::synthesize_triplet(spec, 3, "a");
  expect(hsi::encode_cube(a.i0) == hsi::encode_cube(b.i0), "I0 cubes differ");
  expect(hsi::encode_cube(a.i1) == hsi::encode_cube(b.i1), "I1 cubes differ");
  expect(hsi::encode_cube(a.second->cube) == hsi::encode_cube(b.second->cube), "I2 cubes differ");
  const auto cube_bytes = hsi::encode_cube(a.i0);
  expect(hsi::decode_cube(cube_bytes) == a.i0, "cube round trip not exact");

  // Checkpoints from two identical one-step runs.
  training::TrainConfig config;
  config.batch_size = 2;
  config.max_steps = 1;
  config.seed = 9;
  const auto train_set = data::synthesize_dataset(spec, 2);
  std::vector<std::vector<std::uint8_t>> ckpts;
  for (int run = 0; run < 2; ++run) {
    training::Trainer t(config, {train_set});
    t.run({});
    ckpts.push_back(encode_checkpoint(t.checkpoint()));
  }
  expect(ckpts[0] == ckpts[1], "checkpoints differ");
  expect(encode_checkpoint(decode_checkpoint(ckpts[0])) == ckpts[0], "checkpoint round trip not exact");
  testing::TempDir dir("acceptance");
  const auto trained = import_network(decode_checkpoint(ckpts[0]));
  Checkpoint reexport;
  export_network(trained, reexport);
  save_checkpoint(reexport, dir / "net.ckpt");
  auto reloaded = import_network(load_checkpoint(dir / "net.ckpt"));
  Checkpoint again;
  export_network(reloaded, again);
  expect(encode_checkpoint(again) == encode_checkpoint(reexport), "network save/load not exact");

  // Reports from two fresh evaluations.
  std::vector<std::string> reports;
  for (int run = 0; run < 2; ++run) {
    auto net = import_network(decode_checkpoint(ckpts[0]));
    const auto r = app::evaluate_homography(net, train_set);
    reports.push_back(r.to_json().dump() + r.to_csv());
  }
  expect(reports[0] == reports[1], "reports differ");

  // Malformed files map to distinct codes.
  std::map<std::string, std::optional<ErrorCode>> cube_codes;
  auto corrupt = [&](auto mutate) {
    auto bytes = cube_bytes;
    mutate(bytes);
    return testing::code_of([&] { hsi::decode_cube(bytes); });
  };
  cube_codes["magic"] = corrupt([](auto& v) { v[0] = 'X'; });
  cube_codes["version"] = corrupt([](auto& v) { v[15] = 9; });
  cube_codes["truncated"] = corrupt([](auto& v) { v.pop_back(); });
  cube_codes["header"] = corrupt([](auto& v) { v[20] = '!'; });
  std::set<ErrorCode> distinct;
  for (const auto& [name, code] : cube_codes) {
    expect(code.has_value(), "corrupt cube (" + name + ") accepted");
    if (code) distinct.insert(*code);
  }
  expect(distinct.size() == cube_codes.size(), "cube corruptions share error codes");
  expect(cube_codes["magic"] == ErrorCode::kFormatBadMagic && cube_codes["version"] == ErrorCode::kFormatBadVersion &&
             cube_codes["truncated"] == ErrorCode::kFormatPayloadLength &&
             cube_codes["header"] == ErrorCode::kFormatHeader,
         "cube corruption codes differ from the format contract");

  auto ck_magic = ckpts[0];
  ck_magic[1] = 'X';
  auto ck_short = ckpts[0];
  ck_short.resize(ck_short.size() - 4);
  auto ck_header = ckpts[0];
  ck_header[12] = '!';
  expect(testing::code_of([&] { decode_checkpoint(ck_magic); }) == ErrorCode::kFormatBadMagic, "checkpoint magic");
  expect(testing::code_of([&] { decode_checkpoint(ck_short); }) == ErrorCode::kFormatPayloadLength,
         "checkpoint truncation");
  expect(testing::code_of([&] { decode_checkpoint(ck_header); }) == ErrorCode::kFormatHeader, "checkpoint header");

  std::string detail = "cubes, checkpoints and reports bit-identical across runs; round trips exact; "
                       "corruptions map to distinct codes";
  if (!problems.empty()) {
    detail.clear();
    for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  }
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Acceptance criteria"};
  std::vector<int> criteria;
  cli.add_option("--criterion", criteria, "Criteria to run (default: all)")->check(CLI::Range(1, 8));
  CLI11_PARSE(cli, argc, argv);
  if (criteria.empty()) criteria = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::map<int, std::function<Outcome()>> runners{
      {1, gradient_suite}, {2, shape_contract}, {3, geometry_oracle}, {4, metric_sanity},
      {5, robust_estimation}, {6, toy_training}, {7, ablation}, {8, determinism}};
  bool all = true;
  for (int c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = runners.at(c)();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << c << ": " << (o.pass ? "PASS" : "FAIL") << " (" << fmt("%.1f s", seconds) << ") "
              << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
