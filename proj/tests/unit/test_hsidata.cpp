#include <doctest.h>

#include <cstring>

#include "hykey/hsidata.hpp"
#include "testing.hpp"

using namespace hykey;
using namespace hykey::hsi;
using hykey::testing::code_of;

namespace {

HsiCube ramp_cube(int bands, int height, int width) {
  HsiCube c(bands, height, width, default_wavelengths(bands));
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] = static_cast<float>(i) / static_cast<float>(c.data.size());
  return c;
}

}  // namespace

TEST_CASE("default wavelengths span 460-600 nm evenly") {
  const auto w = default_wavelengths();
  REQUIRE(w.size() == 16);
  CHECK(w.front() == doctest::Approx(460.0));
  CHECK(w.back() == doctest::Approx(600.0));
  CHECK(w[1] - w[0] == doctest::Approx(140.0 / 15.0));
}

TEST_CASE("cube validation") {
  HsiCube c = ramp_cube(4, 3, 2);
  CHECK_NOTHROW(c.validate());
  c.data[5] = 1.5f;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kFormatValueRange);
  c = ramp_cube(4, 3, 2);
  c.wavelengths_nm[2] = c.wavelengths_nm[1];
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kFormatWavelengths);
  c = ramp_cube(4, 3, 2);
  c.data.pop_back();
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kFormatPayloadLength);
}

TEST_CASE("normalise rescales to the unit interval") {
  HsiCube c(2, 1, 2, default_wavelengths(2));
  c.data = {0.2f, 0.4f, 0.6f, 0.3f};
  c.normalise();
  CHECK(c.data[0] == doctest::Approx(0.0));
  CHECK(c.data[2] == doctest::Approx(1.0));
  CHECK(c.data[1] == doctest::Approx(0.5));
  HsiCube flat(1, 1, 2, default_wavelengths(1));
  flat.data = {0.7f, 0.7f};
  flat.normalise();
  CHECK(flat.data[0] == 0.0f);
}

TEST_CASE("to_tensor keeps band-sequential layout") {
  const HsiCube c = ramp_cube(3, 2, 4);
  const Tensor t = c.to_tensor();
  CHECK(t.shape() == Shape{1, 3, 2, 4});
  CHECK(t.at({0, 2, 1, 3}) == c.at(2, 1, 3));
}

TEST_CASE("cube encoding round-trips bit-exactly") {
  const HsiCube c = ramp_cube(16, 5, 7);
  const auto bytes = encode_cube(c);
  CHECK(std::memcmp(bytes.data(), "HYKYCUBE", 8) == 0);
  CHECK(bytes[15] == 1);
  CHECK(decode_cube(bytes) == c);

  testing::TempDir dir("cube");
  save_cube(c, dir / "a.hycube");
  CHECK(load_cube(dir / "a.hycube") == c);
  CHECK(testing::read_bytes(dir / "a.hycube") == bytes);
}

TEST_CASE("cube decoding reports each corruption with its own code") {
  const HsiCube c = ramp_cube(2, 2, 2);
  const auto good = encode_cube(c);

  auto bad = good;
  bad[0] = 'X';
  CHECK(code_of([&] { decode_cube(bad); }) == ErrorCode::kFormatBadMagic);

  bad = good;
  bad[15] = 2;
  CHECK(code_of([&] { decode_cube(bad); }) == ErrorCode::kFormatBadVersion);

  bad = good;
  bad.pop_back();
  CHECK(code_of([&] { decode_cube(bad); }) == ErrorCode::kFormatPayloadLength);

  bad = good;
  bad[16] = 0xff;  // header length far past the end
  CHECK(code_of([&] { decode_cube(bad); }) == ErrorCode::kFormatHeader);

  bad = good;
  bad[20] = '[';  // corrupt the JSON header
  CHECK(code_of([&] { decode_cube(bad); }) == ErrorCode::kFormatHeader);

  HsiCube out_of_range = c;
  out_of_range.data[0] = -0.5f;
  auto raw = good;
  std::memcpy(raw.data() + raw.size() - c.data.size() * 4, out_of_range.data.data(), 4);
  CHECK(code_of([&] { decode_cube(raw); }) == ErrorCode::kFormatValueRange);

  CHECK(code_of([] { load_cube("/nonexistent/dir/x.hycube"); }) == ErrorCode::kIo);
}

TEST_CASE("demosaic places each mosaic cell in its band") {
  MosaicFrame f;
  f.height = 8;
  f.width = 12;
  f.data.resize(96);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 12; ++x) f.data[y * 12 + x] = static_cast<float>(y * 12 + x) / 96.0f;
  std::swap(f.pattern[0], f.pattern[5]);
  const HsiCube c = demosaic_4x4(f);
  CHECK(c.bands == 16);
  CHECK(c.height == 2);
  CHECK(c.width == 3);
  // Band 5 lives at cell (0, 0) after the swap; super-pixel (1, 2) starts at row 4, column 8.
  CHECK(c.at(5, 1, 2) == f.data[4 * 12 + 8]);
  CHECK(c.at(0, 0, 0) == f.data[1 * 12 + 1]);
  CHECK(c.at(15, 1, 0) == f.data[7 * 12 + 3]);

  const MosaicFrame back = remosaic_4x4(c, f.pattern);
  CHECK(back.data == f.data);

  MosaicFrame odd = f;
  odd.width = 10;
  odd.data.resize(80);
  CHECK(code_of([&] { demosaic_4x4(odd); }) == ErrorCode::kFormatMosaicDims);
  MosaicFrame short_payload = f;
  short_payload.data.pop_back();
  CHECK(code_of([&] { demosaic_4x4(short_payload); }) == ErrorCode::kFormatPayloadLength);
  MosaicFrame dup = f;
  dup.pattern[1] = dup.pattern[2];
  CHECK(code_of([&] { demosaic_4x4(dup); }) == ErrorCode::kUsage);
}
