#include "hykey/app/commands.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>

#include "hykey/checkpoint.hpp"
#include "hykey/config.hpp"
#include "hykey/error.hpp"
#include "hykey/geometry.hpp"

namespace hykey::app {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<geometry::Vec2> to_points(const Tensor& points) {
  std::vector<geometry::Vec2> out;
  const auto d = points.data();
  const auto n = points.numel() / 2;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out.emplace_back(d[2 * i], d[2 * i + 1]);
  return out;
}

PairMatches detect_and_match(model::HyKeyNetwork& network, const hsi::HsiCube& a, const hsi::HsiCube& b) {
  const auto out0 = network.forward(a, model::Mode::kEval);
  const auto out1 = network.forward(b, model::Mode::kEval);
  PairMatches r;
  r.kpts0 = to_points(out0.keypoints.points);
  r.kpts1 = to_points(out1.keypoints.points);
  if (!r.kpts0.empty() && !r.kpts1.empty()) {
    r.matches = matching::mnn_match(matching::similarity(out0.descriptors, out1.descriptors));
    r.correspondences = matching::to_correspondences(r.matches, out0.keypoints.points, out1.keypoints.points);
  }
  return r;
}

EvalReport evaluate_homography(model::HyKeyNetwork& network, const std::vector<data::TrainingTriplet>& triplets,
                               const metrics::EvalOptions& options) {
  EvalReport report;
  report.mode = "homography";
  for (const auto& t : triplets) {
    auto m = detect_and_match(network, t.i0, t.i1);
    metrics::PlanarPairInput in;
    in.id = t.id;
    in.kpts0 = std::move(m.kpts0);
    in.kpts1 = std::move(m.kpts1);
    in.matches = std::move(m.correspondences);
    in.geometry = {t.h01, t.i0.height, t.i0.width, t.i1.height, t.i1.width, nullptr, &t.valid1};
    report.planar_pairs.push_back(metrics::evaluate_planar_pair(in, options));
  }
  report.planar = metrics::summarise_planar(report.planar_pairs);
  return report;
}

EvalReport evaluate_pose(model::HyKeyNetwork& network, const std::vector<data::TrainingTriplet>& triplets,
                         const metrics::EvalOptions& options) {
  EvalReport report;
  report.mode = "pose";
  for (const auto& t : triplets) {
    if (!t.second) fail(ErrorCode::kRefused, "pose evaluation needs epipolar data; " + t.id + " has no second view");
    const auto m = detect_and_match(network, t.i0, t.second->cube);
    report.pose_pairs.push_back(
        metrics::evaluate_pose_pair(t.id, m.correspondences, t.second->k0, t.second->k2, t.second->pose02, options));
  }
  report.pose = metrics::summarise_pose(report.pose_pairs);
  return report;
}

namespace {

std::optional<std::uint64_t> parse_u64(const char* text) {
  if (text == nullptr) return std::nullopt;
  std::uint64_t v = 0;
  const char* end = text + std::char_traits<char>::length(text);
  const auto [ptr, ec] = std::from_chars(text, end, v);
  if (ec != std::errc() || ptr != end || ptr == text) return std::nullopt;
  return v;
}

json read_document(const std::optional<fs::path>& path) {
  if (!path) return json::object();
  auto doc = config::load_file(*path);
  if (!doc.is_object()) fail(ErrorCode::kConfig, path->string() + ": top level must be a table/object");
  return doc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
}

json run_echo(json resolved) {
  resolved["threads"] = env_threads();
  return resolved;
}

}  // namespace

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("HYKEY_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const auto v = parse_u64(raw);
  if (!v) fail(ErrorCode::kConfig, std::string("HYKEY_SEED: expected an unsigned integer, got ") + raw);
  return v;
}

int env_threads() {
  const char* raw = std::getenv("HYKEY_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  const auto v = parse_u64(raw);
  if (!v || *v == 0 || *v > 1024) fail(ErrorCode::kConfig, std::string("HYKEY_THREADS: expected 1..1024, got ") + raw);
  return static_cast<int>(*v);
}

// ---- gen-data ------------------------------------------------------------------

hsi::SyntheticPairSpec resolve_gen_data(const GenDataOptions& o) {
  const auto doc = read_document(o.config);
  const config::Reader top(doc, "");
  top.require_known({"data", "count"});
  json data = doc.value("data", json::object());
  if (const auto seed = env_seed()) data["seed"] = *seed;
  if (o.seed) data["seed"] = *o.seed;
  if (o.mode) data["mode"] = *o.mode;
  return data::spec_from_json(data, "data");
}

data::DatasetManifest cmd_gen_data(const GenDataOptions& o) {
  const auto spec = resolve_gen_data(o);
  int count = o.count;
  if (count == 0 && o.config) count = config::Reader(read_document(o.config), "").get("count", 0);
  if (count < 1) fail(ErrorCode::kConfig, "count: expected a positive integer");
  return data::write_dataset(o.out, spec, count, o.force);
}

// ---- train ---------------------------------------------------------------------

RunDocument resolve_train(const json& document, const fs::path& base_dir, bool no_pe) {
  const config::Reader top(document, "");
  top.require_known({"train", "datasets", "checkpoint_every"});
  json train = document.value("train", json::object());
  if (!train.is_object()) fail(ErrorCode::kConfig, "train: expected a table");
  if (const auto seed = env_seed()) train["seed"] = *seed;
  if (no_pe) train["epipolar"] = false;

  RunDocument run;
  run.train = training::TrainConfig::from_json(train, "train");
  run.checkpoint_every = top.get("checkpoint_every", 0);
  if (run.checkpoint_every < 0) fail(ErrorCode::kConfig, "checkpoint_every: expected >= 0");

  const json datasets = document.value("datasets", json::array());
  if (!datasets.is_array() || datasets.empty()) {
    fail(ErrorCode::kConfig, "datasets: expected a non-empty list of dataset entries");
  }
  if (datasets.size() > 2) fail(ErrorCode::kConfig, "datasets: at most two datasets can be mixed");
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const std::string where = "datasets[" + std::to_string(i) + "]";
    const config::Reader r(datasets[i], where);
    r.require_known({"path", "synthetic", "count"});
    json entry = datasets[i];
    if (r.has("path") == r.has("synthetic")) fail(ErrorCode::kConfig, where + ": give exactly one of path, synthetic");
    if (r.has("path")) {
      const fs::path p = r.get<std::string>("path", "");
      entry["path"] = (p.is_absolute() ? p : base_dir / p).lexically_normal().string();
    } else {
      const auto spec = data::spec_from_json(datasets[i].at("synthetic"), where + ".synthetic");
      if (r.get("count", 0) < 1) fail(ErrorCode::kConfig, where + ".count: expected a positive integer");
      entry["synthetic"] = data::spec_to_json(spec);
    }
    run.datasets.push_back(std::move(entry));
  }
  run.resolved = {{"train", run.train.to_json()}, {"datasets", run.datasets},
                  {"checkpoint_every", run.checkpoint_every}};
  return run;
}

std::vector<std::vector<data::TrainingTriplet>> load_training_data(const RunDocument& run) {
  std::vector<std::vector<data::TrainingTriplet>> out;
  for (const auto& entry : run.datasets) {
    if (entry.contains("path")) {
      out.push_back(data::load_dataset(entry.at("path").get<std::string>()));
    } else {
      const auto spec = data::spec_from_json(entry.at("synthetic"));
      out.push_back(data::synthesize_dataset(spec, entry.at("count").get<int>()));
    }
  }
  return out;
}

TrainResult cmd_train(const TrainOptions& o, const std::function<void(const training::StepLog&)>& progress) {
  const auto doc = read_document(o.config);
  const fs::path base = o.config ? o.config->parent_path() : fs::current_path();
  const auto run = resolve_train(doc, base, o.no_pe);
  auto data = load_training_data(run);

  fs::create_directories(o.out);
  const json echo = run_echo(run.resolved);
  write_text(o.out / "config.json", echo.dump(2) + "\n");

  training::Trainer trainer(run.train, std::move(data));
  TrainResult result;
  result.log = o.out / "train_log.jsonl";
  std::ofstream log(result.log, std::ios::binary);
  if (!log) fail(ErrorCode::kIo, "cannot write " + result.log.string());

  auto save = [&](const fs::path& path) {
    auto ckpt = trainer.checkpoint();
    ckpt.metadata["run"] = echo;
    save_checkpoint(ckpt, path);
  };
  trainer.run([&](const training::StepLog& step) {
    log << step.to_json().dump() << '\n';
    if (progress) progress(step);
    if (run.checkpoint_every > 0 && step.step % run.checkpoint_every == 0) {
      save(o.out / ("checkpoint_" + std::to_string(step.step) + ".hyckpt"));
    }
  });
  log.close();
  if (!log) fail(ErrorCode::kIo, "cannot write " + result.log.string());
  result.checkpoint = o.out / "checkpoint_final.hyckpt";
  save(result.checkpoint);
  result.steps = trainer.global_step();
  return result;
}

// ---- eval / match ----------------------------------------------------------------

model::HyKeyNetwork load_network(const fs::path& path, std::optional<int> max_keypoints) {
  auto ckpt = load_checkpoint(path);
  if (max_keypoints) {
    if (!ckpt.metadata.contains("model")) fail(ErrorCode::kCheckpointMismatch, "checkpoint has no model config");
    ckpt.metadata["model"]["eval_max_keypoints"] = *max_keypoints;
  }
  return import_network(ckpt);
}

EvalReport cmd_eval(const EvalCommandOptions& o) {
  if (o.mode != "homography" && o.mode != "pose") fail(ErrorCode::kUsage, "--mode must be homography or pose");
  if (o.max_kpts < 1) fail(ErrorCode::kUsage, "--max-kpts must be positive");
  const auto manifest = data::read_manifest(o.data / "manifest.json");
  if (o.mode == "pose" && manifest.mode != "epipolar") {
    fail(ErrorCode::kRefused, "pose evaluation needs an epipolar dataset, " + o.data.string() + " is " +
                                  manifest.mode);
  }
  auto network = load_network(o.ckpt, o.max_kpts);
  std::vector<data::TrainingTriplet> triplets;
  for (std::size_t i = 0; i < manifest.triplets.size(); ++i) triplets.push_back(data::load_triplet(o.data, manifest, i));

  const metrics::EvalOptions options;
  auto report = o.mode == "homography" ? evaluate_homography(network, triplets, options)
                                       : evaluate_pose(network, triplets, options);
  report.config = run_echo({{"mode", o.mode},
                            {"checkpoint", o.ckpt.string()},
                            {"data", o.data.string()},
                            {"max_kpts", o.max_kpts},
                            {"model", network.config().to_json()},
                            {"homography_ransac_px", options.homography.threshold},
                            {"fundamental_ransac_px", options.fundamental.threshold},
                            {"repeatability_denominator", "sum"}});
  write_report(report, o.out);
  return report;
}

namespace {

geometry::Mat3 matrix_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 9) fail(ErrorCode::kConfig, where + ": expected nine numbers");
  geometry::Mat3 m;
  for (int i = 0; i < 9; ++i) {
    if (!j[i].is_number()) fail(ErrorCode::kConfig, where + ": expected nine numbers");
    m(i / 3, i % 3) = j[i].get<double>();
  }
  return m;
}

}  // namespace

MatchResult cmd_match(const MatchCommandOptions& o) {
  const auto a = hsi::load_cube(o.a);
  const auto b = hsi::load_cube(o.b);
  auto network = load_network(o.ckpt, o.max_kpts);
  const auto m = detect_and_match(network, a, b);

  std::optional<geometry::Homography> h;
  std::optional<geometry::Mat3> f;
  json gt_echo = nullptr;
  if (o.ground_truth) {
    const auto gt = config::load_file(*o.ground_truth);
    const config::Reader r(gt, "");
    r.require_known({"homography", "fundamental"});
    if (r.has("homography") == r.has("fundamental")) {
      fail(ErrorCode::kConfig, o.ground_truth->string() + ": give exactly one of homography, fundamental");
    }
    if (r.has("homography")) h = geometry::Homography::from_matrix(matrix_from(gt.at("homography"), "homography"));
    else f = matrix_from(gt.at("fundamental"), "fundamental");
    gt_echo = gt;
  }
  const double threshold = h ? 3.0 : 5.0;

  MatchResult result;
  std::vector<MatchLine> lines;
  json list = json::array();
  std::size_t correct = 0;
  for (std::size_t k = 0; k < m.correspondences.size(); ++k) {
    const auto& c = m.correspondences[k];
    MatchLine line{c.p0.x(), c.p0.y(), c.p1.x(), c.p1.y(), std::nullopt};
    json entry{{"i", m.matches[k].i}, {"j", m.matches[k].j}, {"p0", {c.p0.x(), c.p0.y()}},
               {"p1", {c.p1.x(), c.p1.y()}}, {"similarity", m.matches[k].similarity}};
    double error = 0.0;
    if (h) error = (geometry::apply_homography(*h, c.p0) - c.p1).norm();
    if (f) error = std::sqrt(geometry::sampson_distance(*f, c.p0, c.p1));
    if (h || f) {
      line.correct = error < threshold;
      correct += *line.correct ? 1 : 0;
      entry["error_px"] = error;
      entry["correct"] = *line.correct;
    }
    lines.push_back(line);
    list.push_back(std::move(entry));
  }
  result.svg = svg_matches(render_prgb(a), render_prgb(b), lines);
  result.json = {{"config", run_echo({{"checkpoint", o.ckpt.string()},
                                      {"a", o.a.string()},
                                      {"b", o.b.string()},
                                      {"max_kpts", o.max_kpts},
                                      {"ground_truth", gt_echo},
                                      {"threshold_px", (h || f) ? json(threshold) : json(nullptr)}})},
                 {"keypoints", {m.kpts0.size(), m.kpts1.size()}},
                 {"matches", std::move(list)}};
  if (h || f) result.json["correct"] = correct;

  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  write_text(o.out, result.svg);
  fs::path json_path = o.out;
  json_path.replace_extension(".json");
  write_text(json_path, result.json.dump(2) + "\n");
  return result;
}

}  // namespace hykey::app
