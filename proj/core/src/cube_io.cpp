#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "hykey/error.hpp"
#include "hykey/hsidata.hpp"

namespace hykey::hsi {

namespace {

constexpr std::array<std::uint8_t, 16> kMagic{'H', 'Y', 'K', 'Y', 'C', 'U', 'B', 'E', 0, 0, 0, 0, 0, 0, 0, 1};
constexpr std::size_t kVersionOffset = 15;

static_assert(std::endian::native == std::endian::little, "cube I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_cube(const HsiCube& cube) {
  cube.validate();
  nlohmann::json header;
  header["bands"] = cube.bands;
  header["height"] = cube.height;
  header["width"] = cube.width;
  header["dtype"] = "f32le";
  header["wavelengths_nm"] = cube.wavelengths_nm;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  const std::size_t offset = out.size();
  out.resize(offset + cube.data.size() * sizeof(float));
  std::memcpy(out.data() + offset, cube.data.data(), cube.data.size() * sizeof(float));
  return out;
}

HsiCube decode_cube(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() ||
      !std::equal(kMagic.begin(), kMagic.begin() + kVersionOffset, bytes.begin())) {
    fail(ErrorCode::kFormatBadMagic, "not a cube file");
  }
  if (bytes[kVersionOffset] != kMagic[kVersionOffset]) {
    fail(ErrorCode::kFormatBadVersion, "unsupported cube version " + std::to_string(bytes[kVersionOffset]));
  }
  if (bytes.size() < kMagic.size() + 4) fail(ErrorCode::kFormatHeader, "missing header length");
  const std::size_t header_len = get_u32(bytes, kMagic.size());
  const std::size_t header_start = kMagic.size() + 4;
  if (bytes.size() < header_start + header_len) fail(ErrorCode::kFormatHeader, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + header_start, bytes.begin() + header_start + header_len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatHeader, std::string("header is not valid JSON: ") + e.what());
  }

  HsiCube cube;
  try {
    if (header.at("dtype").get<std::string>() != "f32le") fail(ErrorCode::kFormatHeader, "dtype must be f32le");
    cube.bands = header.at("bands").get<int>();
    cube.height = header.at("height").get<int>();
    cube.width = header.at("width").get<int>();
    cube.wavelengths_nm = header.at("wavelengths_nm").get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatHeader, std::string("malformed header: ") + e.what());
  }
  if (cube.bands <= 0 || cube.height <= 0 || cube.width <= 0) fail(ErrorCode::kFormatHeader, "non-positive extents");
  if (static_cast<int>(cube.wavelengths_nm.size()) != cube.bands) {
    fail(ErrorCode::kFormatHeader, "header declares " + std::to_string(cube.wavelengths_nm.size()) +
                                       " wavelengths for " + std::to_string(cube.bands) + " bands");
  }

  const std::size_t payload_start = header_start + header_len;
  const std::size_t expected = static_cast<std::size_t>(cube.bands) * cube.height * cube.width;
  if (bytes.size() - payload_start != expected * sizeof(float)) {
    fail(ErrorCode::kFormatPayloadLength, "payload has " + std::to_string(bytes.size() - payload_start) +
                                              " bytes, expected " + std::to_string(expected * sizeof(float)));
  }
  cube.data.resize(expected);
  std::memcpy(cube.data.data(), bytes.data() + payload_start, expected * sizeof(float));
  cube.validate();
  return cube;
}

void save_cube(const HsiCube& cube, const std::filesystem::path& path) {
  const auto bytes = encode_cube(cube);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

HsiCube load_cube(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_cube(bytes);
}

}  // namespace hykey::hsi
