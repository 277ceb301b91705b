#include "hykey/app/report.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hykey/error.hpp"

namespace hykey::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json optional_value(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json curve_json(const metrics::OptionalCurve& c) {
  json out = json::array();
  for (const auto& v : c) out.push_back(optional_value(v));
  return out;
}

json summary_json(const metrics::CurveSummary& s) {
  return {{"values", s.values}, {"auc", s.auc}, {"included", s.included}, {"excluded", s.excluded}};
}

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string cell(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
}

const char* kPalette[] = {"#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6c4f9c"};

}  // namespace

json EvalReport::to_json() const {
  json j{{"mode", mode}, {"config", config}};
  json pairs = json::array();
  if (mode == "homography") {
    for (const auto& p : planar_pairs) {
      pairs.push_back({{"id", p.id},
                       {"repeatability", curve_json(p.rep)},
                       {"matching_score", curve_json(p.ms)},
                       {"mma", curve_json(p.mma)},
                       {"mha", p.mha},
                       {"keypoints", {p.keypoints0, p.keypoints1}},
                       {"covisible", {p.covisible0, p.covisible1}},
                       {"matches", p.matches},
                       {"corner_error", finite_or_null(p.corner_error)}});
    }
    j["aggregate"] = {{"thresholds_px", metrics::kPixelThresholds},
                      {"repeatability", summary_json(planar.rep)},
                      {"matching_score", summary_json(planar.ms)},
                      {"mma", summary_json(planar.mma)},
                      {"mha", summary_json(planar.mha)}};
  } else {
    for (const auto& p : pose_pairs) {
      pairs.push_back({{"id", p.id},
                       {"matches", p.matches},
                       {"inliers", p.inliers},
                       {"pose_error_deg", finite_or_null(p.pose_error_deg)}});
    }
    j["aggregate"] = {{"thresholds_deg", metrics::kAngleThresholds},
                      {"maa", pose.maa},
                      {"pairs", pose.pairs},
                      {"failures", pose.failures}};
  }
  j["pairs"] = std::move(pairs);
  return j;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  if (mode == "homography") {
    out << "id,keypoints0,keypoints1,covisible0,covisible1,matches,corner_error";
    for (const char* name : {"rep", "ms", "mma", "mha"}) {
      for (double t : metrics::kPixelThresholds) out << ',' << name << '@' << t;
    }
    out << '\n';
    for (const auto& p : planar_pairs) {
      out << p.id << ',' << p.keypoints0 << ',' << p.keypoints1 << ',' << p.covisible0 << ',' << p.covisible1 << ','
          << p.matches << ',' << number(p.corner_error);
      for (const auto* c : {&p.rep, &p.ms, &p.mma}) {
        for (const auto& v : *c) out << ',' << cell(v);
      }
      for (double v : p.mha) out << ',' << number(v);
      out << '\n';
    }
  } else {
    out << "id,matches,inliers,pose_error_deg\n";
    for (const auto& p : pose_pairs) {
      out << p.id << ',' << p.matches << ',' << p.inliers << ',' << number(p.pose_error_deg) << '\n';
    }
  }
  return out.str();
}

std::vector<std::pair<std::string, std::string>> EvalReport::svg_plots() const {
  if (mode == "homography") {
    const std::vector<double> xs(metrics::kPixelThresholds.begin(), metrics::kPixelThresholds.end());
    auto series = [](const char* label, const metrics::CurveSummary& s) {
      return Series{label, std::vector<double>(s.values.begin(), s.values.end())};
    };
    return {{"curves", svg_line_plot("Planar metrics", "threshold (px)", xs,
                                     {series("Rep", planar.rep), series("MS", planar.ms), series("MMA", planar.mma),
                                      series("MHA", planar.mha)})}};
  }
  const std::vector<double> xs(metrics::kAngleThresholds.begin(), metrics::kAngleThresholds.end());
  return {{"maa", svg_line_plot("Relative pose mAA", "threshold (deg)", xs,
                                {Series{"mAA", std::vector<double>(pose.maa.begin(), pose.maa.end())}})}};
}

std::vector<fs::path> write_report(const EvalReport& report, const fs::path& out) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::vector<fs::path> written{out};
  write_text(out, report.to_json().dump(2) + "\n");
  fs::path csv = out;
  csv.replace_extension(".csv");
  write_text(csv, report.to_csv());
  written.push_back(csv);
  for (const auto& [name, svg] : report.svg_plots()) {
    fs::path p = out.parent_path() / (out.stem().string() + "_" + name + ".svg");
    write_text(p, svg);
    written.push_back(p);
  }
  return written;
}

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::vector<double>& xs,
                          const std::vector<Series>& series) {
  constexpr double kW = 480, kH = 320, kLeft = 50, kRight = 110, kTop = 30, kBottom = 45;
  const double x_min = xs.empty() ? 0.0 : xs.front();
  const double x_max = xs.empty() ? 1.0 : std::max(xs.back(), x_min + 1e-9);
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * (kW - kLeft - kRight); };
  auto py = [&](double y) { return kH - kBottom - std::clamp(y, 0.0, 1.0) * (kH - kTop - kBottom); };

  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
    << title << "</text>\n";
  s << "<g stroke=\"#888\" stroke-width=\"1\">\n"
    << "<line x1=\"" << px(x_min) << "\" y1=\"" << py(0) << "\" x2=\"" << px(x_max) << "\" y2=\"" << py(0) << "\"/>\n"
    << "<line x1=\"" << px(x_min) << "\" y1=\"" << py(0) << "\" x2=\"" << px(x_min) << "\" y2=\"" << py(1) << "\"/>\n"
    << "</g>\n<g font-family=\"sans-serif\" font-size=\"10\">\n";
  for (double x : xs) {
    s << "<text x=\"" << px(x) << "\" y=\"" << py(0) + 14 << "\" text-anchor=\"middle\">" << x << "</text>\n";
  }
  for (double y : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(y) + 3 << "\" text-anchor=\"end\">" << y << "</text>\n";
  }
  s << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 10 << "\" text-anchor=\"middle\">" << x_label
    << "</text>\n</g>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* colour = kPalette[k % std::size(kPalette)];
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size() && i < series[k].values.size(); ++i) {
      s << px(xs[i]) << ',' << py(series[k].values[i]) << ' ';
    }
    s << "\"/>\n<text x=\"" << kW - kRight + 10 << "\" y=\"" << kTop + 16 * (k + 1)
      << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << colour << "\">" << series[k].label
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

RgbImage render_prgb(const hsi::HsiCube& cube) {
  auto nearest = [&](double nm) {
    int best = 0;
    for (int b = 1; b < cube.bands; ++b) {
      if (std::abs(cube.wavelengths_nm[b] - nm) < std::abs(cube.wavelengths_nm[best] - nm)) best = b;
    }
    return best;
  };
  const int channels[3] = {nearest(600.0), nearest(540.0), nearest(460.0)};
  const auto [lo_it, hi_it] = std::minmax_element(cube.data.begin(), cube.data.end());
  const float lo = cube.data.empty() ? 0.0f : *lo_it;
  const float span = cube.data.empty() ? 1.0f : std::max(*hi_it - lo, 1e-12f);
  RgbImage img{cube.width, cube.height, std::vector<std::uint8_t>(3u * cube.width * cube.height)};
  for (int y = 0; y < cube.height; ++y) {
    for (int x = 0; x < cube.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = (cube.at(channels[c], y, x) - lo) / span;
        img.pixels[3 * (static_cast<std::size_t>(y) * cube.width + x) + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  png_image p{};
  p.version = PNG_IMAGE_VERSION;
  p.width = static_cast<png_uint_32>(image.width);
  p.height = static_cast<png_uint_32>(image.height);
  p.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(p, size, 0, image.pixels.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, std::string("png encoding failed: ") + p.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&p, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, std::string("png encoding failed: ") + p.message);
  }
  out.resize(size);
  return out;
}

std::string base64(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t n = (std::uint32_t{bytes[i]} << 16) | (i + 1 < bytes.size() ? bytes[i + 1] << 8 : 0) |
                            (i + 2 < bytes.size() ? bytes[i + 2] : 0);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[n & 63] : '=';
  }
  return out;
}

std::string svg_matches(const RgbImage& a, const RgbImage& b, const std::vector<MatchLine>& lines) {
  constexpr int kGap = 8;
  const int width = a.width + kGap + b.width;
  const int height = std::max(a.height, b.height);
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
    << "<image x=\"0\" y=\"0\" width=\"" << a.width << "\" height=\"" << a.height
    << "\" style=\"image-rendering:pixelated\" href=\"data:image/png;base64," << base64(encode_png(a)) << "\"/>\n"
    << "<image x=\"" << a.width + kGap << "\" y=\"0\" width=\"" << b.width << "\" height=\"" << b.height
    << "\" style=\"image-rendering:pixelated\" href=\"data:image/png;base64," << base64(encode_png(b)) << "\"/>\n"
    << "<g stroke-width=\"0.6\" stroke-opacity=\"0.85\">\n";
  for (const auto& l : lines) {
    const char* colour = !l.correct ? "#f2c14e" : (*l.correct ? "#2e933c" : "#d1495b");
    // Pixel centres sit at integer coordinates.
    s << "<line x1=\"" << l.x0 + 0.5 << "\" y1=\"" << l.y0 + 0.5 << "\" x2=\"" << l.x1 + 0.5 + a.width + kGap
      << "\" y2=\"" << l.y1 + 0.5 << "\" stroke=\"" << colour << "\"/>\n";
  }
  s << "</g>\n</svg>\n";
  return s.str();
}

}  // namespace hykey::app
