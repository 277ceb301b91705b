#include <CLI11.hpp>
#include <iostream>

#include "hykey/app/commands.hpp"
#include "hykey/error.hpp"

namespace {

// 1: unexpected failure, 2: command-line usage, 10 + code: library errors.
int exit_status(hykey::ErrorCode code) {
  return code == hykey::ErrorCode::kUsage ? 2 : 10 + static_cast<int>(code);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace hykey;
  CLI::App cli{"HyKey hyperspectral keypoint detection and description"};
  cli.require_subcommand(1);

  app::GenDataOptions gen;
  std::string gen_config, gen_mode;
  std::uint64_t gen_seed = 0;
  auto* gen_cmd = cli.add_subcommand("gen-data", "Generate a synthetic triplet dataset");
  gen_cmd->add_option("--config", gen_config, "JSON/TOML document with a [data] table and count")
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--mode", gen_mode, "planar or epipolar")->check(CLI::IsMember({"planar", "epipolar"}));
  gen_cmd->add_option("--count", gen.count, "Number of triplets");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  auto* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "Generator seed");
  gen_cmd->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  app::TrainOptions train;
  std::string train_config;
  auto* train_cmd = cli.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train_config, "JSON/TOML training document")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out, "Output directory for checkpoints and logs")->required();
  train_cmd->add_flag("--no-pe", train.no_pe, "Disable the epipolar term (HyKey-noPE)");

  app::EvalCommandOptions eval;
  auto* eval_cmd = cli.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--mode", eval.mode, "homography or pose")->check(CLI::IsMember({"homography", "pose"}));
  eval_cmd->add_option("--ckpt", eval.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--max-kpts", eval.max_kpts, "Keypoints per image")->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Report JSON path")->capture_default_str();

  app::MatchCommandOptions match;
  std::string match_gt;
  auto* match_cmd = cli.add_subcommand("match", "Match two cubes and render the correspondences");
  match_cmd->add_option("--ckpt", match.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  match_cmd->add_option("--a", match.a, "First cube")->required();
  match_cmd->add_option("--b", match.b, "Second cube")->required();
  match_cmd->add_option("--out", match.out, "SVG path; the match list goes next to it as JSON")->capture_default_str();
  match_cmd->add_option("--max-kpts", match.max_kpts, "Keypoints per image")->capture_default_str();
  match_cmd->add_option("--gt", match_gt, "JSON with a homography or fundamental matrix from a to b")
      ->check(CLI::ExistingFile);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) {
      if (!gen_config.empty()) gen.config = gen_config;
      if (!gen_mode.empty()) gen.mode = gen_mode;
      if (*gen_seed_opt) gen.seed = gen_seed;
      const auto manifest = app::cmd_gen_data(gen);
      std::cout << "wrote " << manifest.triplets.size() << " triplets to " << gen.out.string() << '\n';
    } else if (*train_cmd) {
      train.config = train_config;
      const auto result = app::cmd_train(train, [](const training::StepLog& s) {
        if (s.step % 10 == 0) std::cerr << "step " << s.step << " loss " << s.loss.total << '\n';
        for (const auto& e : s.events) std::cerr << "step " << s.step << ": " << e << '\n';
      });
      std::cout << "trained " << result.steps << " steps; checkpoint " << result.checkpoint.string() << '\n';
    } else if (*eval_cmd) {
      const auto report = app::cmd_eval(eval);
      std::cout << report.to_json().at("aggregate").dump(2) << '\n';
    } else if (*match_cmd) {
      if (!match_gt.empty()) match.ground_truth = match_gt;
      const auto result = app::cmd_match(match);
      std::cout << result.json.at("matches").size() << " matches written to " << match.out.string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
