#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "hykey/hsidata.hpp"
#include "hykey/metrics.hpp"

namespace hykey::app {

struct EvalReport {
  std::string mode;  // "homography" or "pose"
  nlohmann::json config = nlohmann::json::object();
  std::vector<metrics::PlanarPairMetrics> planar_pairs;
  metrics::PlanarSummary planar;
  std::vector<metrics::PosePairMetrics> pose_pairs;
  metrics::PoseSummary pose;

  nlohmann::json to_json() const;
  // One row per pair; undefined values are empty cells, failed poses "inf".
  std::string to_csv() const;
  // Named SVG line plots of the aggregate curves, e.g. {"curves", "<svg...>"}.
  std::vector<std::pair<std::string, std::string>> svg_plots() const;
};

// Writes <out>, <out stem>.csv and <out stem>_<plot>.svg. Returns the paths.
std::vector<std::filesystem::path> write_report(const EvalReport& report, const std::filesystem::path& out);

struct Series {
  std::string label;
  std::vector<double> values;
};

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::vector<double>& xs,
                          const std::vector<Series>& series);

// 8-bit RGB from the bands nearest 600 / 540 / 460 nm, each stretched by the
// cube's global min and max.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
};

RgbImage render_prgb(const hsi::HsiCube& cube);
std::vector<std::uint8_t> encode_png(const RgbImage& image);
std::string base64(const std::vector<std::uint8_t>& bytes);

struct MatchLine {
  double x0, y0, x1, y1;
  std::optional<bool> correct;  // colour when ground truth is known
};

// Side-by-side pRGB renderings with one <line> per match.
std::string svg_matches(const RgbImage& a, const RgbImage& b, const std::vector<MatchLine>& lines);

}  // namespace hykey::app
