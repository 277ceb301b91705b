#include "hykey/hsidata.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hykey/error.hpp"

namespace hykey::hsi {

HsiCube::HsiCube(int b, int h, int w, std::vector<float> wl)
    : bands(b), height(h), width(w), wavelengths_nm(std::move(wl)) {
  if (b <= 0 || h <= 0 || w <= 0) fail(ErrorCode::kDimension, "cube extents must be positive");
  if (static_cast<int>(wavelengths_nm.size()) != b) {
    fail(ErrorCode::kFormatHeader, "wavelength count does not match band count");
  }
  data.assign(static_cast<std::size_t>(b) * h * w, 0.0f);
}

std::span<const float> HsiCube::band(int b) const {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  return std::span<const float>(data).subspan(static_cast<std::size_t>(b) * plane, plane);
}

void HsiCube::validate() const {
  if (bands <= 0 || height <= 0 || width <= 0) fail(ErrorCode::kFormatHeader, "cube extents must be positive");
  if (static_cast<int>(wavelengths_nm.size()) != bands) {
    fail(ErrorCode::kFormatHeader, "declares " + std::to_string(wavelengths_nm.size()) + " wavelengths for " +
                                       std::to_string(bands) + " bands");
  }
  for (std::size_t i = 1; i < wavelengths_nm.size(); ++i) {
    if (!(wavelengths_nm[i] > wavelengths_nm[i - 1])) {
      fail(ErrorCode::kFormatWavelengths, "wavelengths must be strictly increasing");
    }
  }
  if (data.size() != static_cast<std::size_t>(bands) * height * width) {
    fail(ErrorCode::kFormatPayloadLength, "payload holds " + std::to_string(data.size()) + " values");
  }
  for (float v : data) {
    if (!(v >= 0.0f && v <= 1.0f)) fail(ErrorCode::kFormatValueRange, "cube values must lie in [0,1]");
  }
}

void HsiCube::normalise() {
  if (data.empty()) return;
  const auto [lo_it, hi_it] = std::minmax_element(data.begin(), data.end());
  const float lo = *lo_it;
  const float range = *hi_it - lo;
  for (float& v : data) v = range > 0.0f ? (v - lo) / range : 0.0f;
}

Tensor HsiCube::to_tensor() const { return Tensor({1, bands, height, width}, data); }

std::vector<float> default_wavelengths(int bands) {
  std::vector<float> out(static_cast<std::size_t>(bands));
  for (int i = 0; i < bands; ++i) {
    out[i] = bands == 1 ? 460.0f : static_cast<float>(460.0 + 140.0 * i / (bands - 1));
  }
  return out;
}

namespace {

void check_pattern(const std::array<int, 16>& pattern) {
  std::array<bool, 16> seen{};
  for (int b : pattern) {
    if (b < 0 || b >= 16 || seen[b]) fail(ErrorCode::kUsage, "mosaic pattern must be a permutation of 0..15");
    seen[b] = true;
  }
}

}  // namespace

HsiCube demosaic_4x4(const MosaicFrame& frame, std::vector<float> wavelengths_nm) {
  if (frame.height <= 0 || frame.width <= 0 || frame.height % 4 != 0 || frame.width % 4 != 0) {
    fail(ErrorCode::kFormatMosaicDims, "mosaic extents " + std::to_string(frame.height) + "x" +
                                           std::to_string(frame.width) + " are not divisible by 4");
  }
  if (frame.data.size() != static_cast<std::size_t>(frame.height) * frame.width) {
    fail(ErrorCode::kFormatPayloadLength, "mosaic payload does not match its extents");
  }
  check_pattern(frame.pattern);
  HsiCube cube(16, frame.height / 4, frame.width / 4, std::move(wavelengths_nm));
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const int b = frame.pattern[r * 4 + c];
      for (int i = 0; i < cube.height; ++i) {
        for (int j = 0; j < cube.width; ++j) {
          cube.at(b, i, j) = frame.data[static_cast<std::size_t>(i * 4 + r) * frame.width + j * 4 + c];
        }
      }
    }
  }
  return cube;
}

MosaicFrame remosaic_4x4(const HsiCube& cube, const std::array<int, 16>& pattern) {
  if (cube.bands != 16) fail(ErrorCode::kUnsupportedInput, "4x4 mosaic requires 16 bands");
  check_pattern(pattern);
  MosaicFrame frame;
  frame.height = cube.height * 4;
  frame.width = cube.width * 4;
  frame.pattern = pattern;
  frame.data.assign(static_cast<std::size_t>(frame.height) * frame.width, 0.0f);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const int b = pattern[r * 4 + c];
      for (int i = 0; i < cube.height; ++i) {
        for (int j = 0; j < cube.width; ++j) {
          frame.data[static_cast<std::size_t>(i * 4 + r) * frame.width + j * 4 + c] = cube.at(b, i, j);
        }
      }
    }
  }
  return frame;
}

}  // namespace hykey::hsi
