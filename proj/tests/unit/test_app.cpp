#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hykey/app/commands.hpp"
#include "hykey/checkpoint.hpp"
#include "hykey/config.hpp"
#include "testing.hpp"

using namespace hykey;
using namespace hykey::app;
using hykey::testing::code_of;
using hykey::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const json& j) { std::ofstream(path) << j.dump(2); }

json read_json(const fs::path& path) { return config::load_file(path); }

std::string read_text(const fs::path& path) {
  std::stringstream s;
  s << std::ifstream(path).rdbuf();
  return s.str();
}

fs::path untrained_checkpoint(const TempDir& dir) {
  Checkpoint c;
  export_network(model::HyKeyNetwork(model::HyKeyConfig{}, 5), c);
  const auto path = dir / "untrained.hyckpt";
  save_checkpoint(c, path);
  return path;
}

json toy_train(int max_steps) {
  return {{"max_steps", max_steps},
          {"batch_size", 1},
          {"seed", 3},
          {"model", {{"train_detected", 48}, {"train_random", 48}}}};
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HYKEY_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("gen-data writes count triplets and refuses to overwrite") {
  TempDir dir("app");
  GenDataOptions o;
  o.count = 10;
  o.out = dir / "planar";
  o.seed = 8;
  const auto m = cmd_gen_data(o);
  CHECK(m.triplets.size() == 10);
  CHECK(data::read_manifest(o.out / "manifest.json").triplets.size() == 10);
  CHECK(code_of([&] { cmd_gen_data(o); }) == ErrorCode::kRefused);
  o.force = true;
  o.count = 2;
  CHECK(cmd_gen_data(o).triplets.size() == 2);

  GenDataOptions e;
  e.mode = "epipolar";
  e.count = 2;
  e.out = dir / "epi";
  const auto em = cmd_gen_data(e);
  const auto doc = read_json(e.out / "manifest.json");
  CHECK(doc.at("mode") == "epipolar");
  for (const auto& t : em.triplets) CHECK(t.second.has_value());
  const auto frame = doc.at("frames").at(0);
  CHECK(frame.contains("intrinsics"));
  CHECK(frame.contains("pose"));

  GenDataOptions none;
  none.out = dir / "none";
  CHECK(code_of([&] { cmd_gen_data(none); }) == ErrorCode::kConfig);
}

TEST_CASE("gen-data layering: config file, then seed flag") {
  TempDir dir("app");
  write_json(dir / "gen.json", {{"data", {{"seed", 4}, {"noise_std", 0.0}}}, {"count", 3}});
  GenDataOptions o;
  o.config = dir / "gen.json";
  CHECK(resolve_gen_data(o).seed == 4);
  CHECK(resolve_gen_data(o).noise_std == 0.0);
  o.seed = 9;
  CHECK(resolve_gen_data(o).seed == 9);
  o.out = dir / "out";
  CHECK(cmd_gen_data(o).triplets.size() == 3);
  write_json(dir / "bad.json", {{"data", {{"colour", 1}}}});
  o.config = dir / "bad.json";
  CHECK(code_of([&] { resolve_gen_data(o); }) == ErrorCode::kConfig);
}

TEST_CASE("gen-data with one seed twice is byte-identical") {
  TempDir dir("app");
  for (const char* name : {"a", "b"}) {
    GenDataOptions o;
    o.mode = "epipolar";
    o.count = 2;
    o.seed = 77;
    o.out = dir / name;
    cmd_gen_data(o);
  }
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const auto twin = dir / "b" / fs::relative(entry.path(), dir / "a");
    CHECK(testing::read_bytes(entry.path()) == testing::read_bytes(twin));
  }
  CHECK(files > 2);
}

TEST_CASE("train echoes the resolved config and honours --no-pe") {
  TempDir dir("app");
  json synth = data::spec_to_json(hsi::SyntheticPairSpec{});
  synth["mode"] = "epipolar";
  json train = toy_train(2);
  train["epipolar_start_epoch"] = 0;  // the epipolar term would be live from step one
  write_json(dir / "run.json", {{"train", train}, {"datasets", {{{"synthetic", synth}, {"count", 2}}}}});

  TrainOptions o;
  o.config = dir / "run.json";
  o.out = dir / "nope";
  o.no_pe = true;
  const auto r = cmd_train(o);
  CHECK(r.steps == 2);
  CHECK(fs::exists(r.checkpoint));
  const auto echoed = read_json(o.out / "config.json");
  const auto w = echoed.at("train").at("weights");
  CHECK(w.at("pk") == 0.5);
  CHECK(w.at("rp") == 1.0);
  CHECK(w.at("rel") == 1.0);
  CHECK(w.at("desc") == 5.0);
  CHECK(w.at("epi") == 0.25);
  CHECK(echoed.at("train").at("epipolar") == false);
  CHECK(echoed.at("threads") == 1);

  std::istringstream log(read_text(r.log));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto step = json::parse(line);
    CHECK(step.at("loss").at("weighted").at("epi") == 0.0);
    CHECK(step.at("loss").at("weights").at("epi") == 0.0);
    ++lines;
  }
  CHECK(lines == 2);
  CHECK(load_checkpoint(r.checkpoint).metadata.at("run").at("train") == echoed.at("train"));

  // The full model on the same document does use the epipolar term.
  o.no_pe = false;
  o.out = dir / "full";
  const auto full = cmd_train(o);
  std::istringstream full_log(read_text(full.log));
  std::getline(full_log, line);
  CHECK(json::parse(line).at("loss").at("weights").at("epi") == 0.25);
}

TEST_CASE("train reports invalid documents with a field path") {
  TempDir dir("app");
  json train = toy_train(1);
  train["weights"] = {{"desc", "five"}};
  write_json(dir / "bad.json", {{"train", train}, {"datasets", {{{"path", "x"}}}}});
  TrainOptions o;
  o.config = dir / "bad.json";
  o.out = dir / "out";
  try {
    cmd_train(o);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
    CHECK(std::string(e.what()).find("train.weights.desc") != std::string::npos);
  }
  write_json(dir / "empty.json", {{"train", toy_train(1)}, {"datasets", json::array()}});
  o.config = dir / "empty.json";
  CHECK(code_of([&] { cmd_train(o); }) == ErrorCode::kConfig);
}

TEST_CASE("eval report aggregates equal the CSV re-aggregation") {
  TempDir dir("app");
  GenDataOptions g;
  g.count = 4;
  g.seed = 12;
  g.out = dir / "data";
  cmd_gen_data(g);
  EvalCommandOptions o;
  o.ckpt = untrained_checkpoint(dir);
  o.data = g.out;
  o.out = dir / "report.json";
  CHECK(o.max_kpts == 1024);
  cmd_eval(o);

  const auto report = read_json(o.out);
  CHECK(report.at("config").at("max_kpts") == 1024);
  CHECK(fs::exists(dir / "report_curves.svg"));
  const auto rows = parse_csv(read_text(dir / "report.csv"));
  REQUIRE(rows.size() == 5);
  const auto& header = rows[0];
  for (const char* metric : {"rep", "ms", "mma", "mha"}) {
    const std::string key = metric == std::string("rep")   ? "repeatability"
                            : metric == std::string("ms")  ? "matching_score"
                                                           : metric;
    const auto values = report.at("aggregate").at(key).at("values");
    for (int t = 0; t < 5; ++t) {
      std::ostringstream name;
      name << metric << '@' << metrics::kPixelThresholds[t];
      const auto col = std::find(header.begin(), header.end(), name.str()) - header.begin();
      REQUIRE(col < static_cast<long>(header.size()));
      double sum = 0;
      int n = 0;
      for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r][col].empty()) continue;
        sum += std::stod(rows[r][col]);
        ++n;
      }
      const double mean = n == 0 ? 0.0 : sum / n;
      CHECK(values[t].get<double>() == doctest::Approx(mean).epsilon(1e-12));
    }
  }

  o.mode = "pose";
  CHECK(code_of([&] { cmd_eval(o); }) == ErrorCode::kRefused);
}

TEST_CASE("eval on identical views gives perfect repeatability") {
  TempDir dir("app");
  auto spec = hsi::SyntheticPairSpec::identity(hsi::PairMode::kPlanar);
  spec.seed = 2;
  data::write_dataset(dir / "self", spec, 2, false);
  EvalCommandOptions o;
  o.ckpt = untrained_checkpoint(dir);
  o.data = dir / "self";
  o.out = dir / "self.json";
  const auto r = cmd_eval(o);
  CHECK(r.planar.rep.auc == doctest::Approx(1.0));
  CHECK(r.planar.mma.auc == doctest::Approx(1.0));
  CHECK(r.planar.mha.auc == doctest::Approx(1.0));
}

TEST_CASE("match output: JSON list, SVG lines and MMA colouring agree") {
  TempDir dir("app");
  hsi::SyntheticPairSpec spec;
  spec.seed = 31;
  const auto t = data::synthesize_triplet(spec, 0, "m");
  hsi::save_cube(t.i0, dir / "a.hycube");
  hsi::save_cube(t.i1, dir / "b.hycube");
  json h = json::array();
  for (int i = 0; i < 9; ++i) h.push_back(t.h01.m(i / 3, i % 3));
  write_json(dir / "gt.json", {{"homography", h}});

  MatchCommandOptions o;
  o.ckpt = untrained_checkpoint(dir);
  o.a = dir / "a.hycube";
  o.b = dir / "b.hycube";
  o.out = dir / "viz.svg";
  o.ground_truth = dir / "gt.json";
  const auto r = cmd_match(o);
  const auto svg = read_text(o.out);
  const auto on_disk = read_json(dir / "viz.json");
  const auto& list = on_disk.at("matches");
  REQUIRE(list.size() > 0);

  auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (auto at = svg.find(needle); at != std::string::npos; at = svg.find(needle, at + 1)) ++n;
    return n;
  };
  CHECK(count("<line ") == list.size());

  geometry::CorrespondenceSet corr;
  for (const auto& m : list) {
    corr.push_back({{m.at("p0")[0].get<double>(), m.at("p0")[1].get<double>()},
                    {m.at("p1")[0].get<double>(), m.at("p1")[1].get<double>()},
                    m.at("similarity").get<double>()});
  }
  const double expected = *metrics::mma(corr, t.h01, 3.0);
  const auto green = count("stroke=\"#2e933c\"");
  CHECK(static_cast<double>(green) / list.size() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(on_disk.at("correct") == green);
  CHECK(r.json.at("matches").size() == list.size());

  // Identical cubes match along the diagonal and every match is correct.
  write_json(dir / "id.json", {{"homography", {1, 0, 0, 0, 1, 0, 0, 0, 1}}});
  o.b = o.a;
  o.ground_truth = dir / "id.json";
  o.out = dir / "self.svg";
  const auto self = cmd_match(o);
  CHECK(self.json.at("correct") == self.json.at("matches").size());
  CHECK(self.json.at("matches").size() > 0);

  o.a = dir / "missing.hycube";
  CHECK(code_of([&] { cmd_match(o); }) == ErrorCode::kIo);
}

TEST_CASE("environment overrides") {
  ::setenv("HYKEY_SEED", "41", 1);
  GenDataOptions o;
  CHECK(resolve_gen_data(o).seed == 41);
  o.seed = 2;
  CHECK(resolve_gen_data(o).seed == 2);
  ::setenv("HYKEY_SEED", "x1", 1);
  CHECK(code_of([] { env_seed(); }) == ErrorCode::kConfig);
  ::unsetenv("HYKEY_SEED");
  ::setenv("HYKEY_THREADS", "4", 1);
  CHECK(env_threads() == 4);
  ::setenv("HYKEY_THREADS", "0", 1);
  CHECK(code_of([] { env_threads(); }) == ErrorCode::kConfig);
  ::unsetenv("HYKEY_THREADS");
  CHECK(env_threads() == 1);
}

TEST_CASE("command-line exit codes") {
  TempDir dir("app");
  const std::string out = (dir / "d").string();
  CHECK(run_cli("gen-data --count 1 --seed 1 --out " + out) == 0);
  CHECK(run_cli("gen-data --count 1 --seed 1 --out " + out) == 10 + static_cast<int>(ErrorCode::kRefused));
  CHECK(run_cli("gen-data --count 1 --out " + out + " --force") == 0);
  CHECK(run_cli("gen-data --mode sideways --count 1 --out " + out) == 2);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("eval --ckpt /nonexistent --data " + out) == 2);
}
