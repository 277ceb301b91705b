#include "hykey/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hykey/error.hpp"

namespace hykey {

namespace {

constexpr std::array<char, 8> kMagic{'H', 'Y', 'K', 'Y', 'C', 'K', 'P', 'T'};
constexpr int kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

const Checkpoint::Blob* Checkpoint::find(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

void Checkpoint::add(std::string name, Shape shape, std::span<const float> data) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    fail(ErrorCode::kDimension, "blob " + name + " does not match its shape");
  }
  blobs.push_back({std::move(name), std::move(shape), std::vector<float>(data.begin(), data.end())});
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json meta = ckpt.metadata;
  meta["format"] = "hykey-checkpoint";
  meta["version"] = kVersion;
  meta["blobs"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& b : ckpt.blobs) {
    meta["blobs"].push_back({{"name", b.name}, {"shape", b.shape}, {"offset", offset}, {"count", b.data.size()}});
    offset += b.data.size();
  }
  const std::string text = meta.dump();
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& b : ckpt.blobs) {
    const std::size_t at = out.size();
    out.resize(at + b.data.size() * sizeof(float));
    std::memcpy(out.data() + at, b.data.data(), b.data.size() * sizeof(float));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() + 4 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    fail(ErrorCode::kFormatBadMagic, "not a checkpoint file");
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[kMagic.size() + i]) << (8 * i);
  const std::size_t start = kMagic.size() + 4;
  if (bytes.size() < start + len) fail(ErrorCode::kFormatHeader, "truncated checkpoint metadata");
  Checkpoint ckpt;
  try {
    ckpt.metadata = nlohmann::json::parse(bytes.begin() + start, bytes.begin() + start + len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatHeader, std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  if (ckpt.metadata.value("version", 0) != kVersion) {
    fail(ErrorCode::kFormatBadVersion, "unsupported checkpoint version");
  }
  const std::size_t payload = start + len;
  std::size_t total = 0;
  try {
    for (const auto& jb : ckpt.metadata.at("blobs")) {
      Checkpoint::Blob b;
      b.name = jb.at("name").get<std::string>();
      b.shape = jb.at("shape").get<Shape>();
      const auto off = jb.at("offset").get<std::size_t>();
      const auto count = jb.at("count").get<std::size_t>();
      if (static_cast<std::int64_t>(count) != shape_numel(b.shape)) {
        fail(ErrorCode::kFormatHeader, "blob " + b.name + " count disagrees with its shape");
      }
      if (payload + (off + count) * sizeof(float) > bytes.size()) {
        fail(ErrorCode::kFormatPayloadLength, "blob " + b.name + " extends past the end of the file");
      }
      b.data.resize(count);
      std::memcpy(b.data.data(), bytes.data() + payload + off * sizeof(float), count * sizeof(float));
      total += count;
      ckpt.blobs.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatHeader, std::string("malformed blob table: ") + e.what());
  }
  if (payload + total * sizeof(float) != bytes.size()) {
    fail(ErrorCode::kFormatPayloadLength, "checkpoint payload length mismatch");
  }
  ckpt.metadata.erase("blobs");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void export_network(const model::HyKeyNetwork& network, Checkpoint& ckpt) {
  ckpt.metadata["model"] = network.config().to_json();
  for (const auto& p : network.parameters()) ckpt.add("param/" + p.name, p.value.shape(), p.value.data());
  const auto& bn = network.batchnorm_state();
  const auto c = static_cast<std::int64_t>(bn.running_mean.size());
  ckpt.add("bn/running_mean", {c}, bn.running_mean);
  ckpt.add("bn/running_var", {c}, bn.running_var);
}

void import_weights(model::HyKeyNetwork& network, const Checkpoint& ckpt) {
  auto copy = [&](const std::string& name, const Shape& shape, std::span<float> dst) {
    const auto* blob = ckpt.find(name);
    if (blob == nullptr) fail(ErrorCode::kCheckpointMismatch, "checkpoint lacks " + name);
    if (blob->shape != shape) {
      fail(ErrorCode::kCheckpointMismatch, name + " has shape " + shape_to_string(blob->shape) + ", model expects " +
                                               shape_to_string(shape));
    }
    std::copy(blob->data.begin(), blob->data.end(), dst.begin());
  };
  for (auto& p : network.parameters()) copy("param/" + p.name, p.value.shape(), p.value.mutable_data());
  auto& bn = network.batchnorm_state();
  const Shape c{static_cast<std::int64_t>(bn.running_mean.size())};
  copy("bn/running_mean", c, bn.running_mean);
  copy("bn/running_var", c, bn.running_var);
}

model::HyKeyNetwork import_network(const Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("model")) fail(ErrorCode::kCheckpointMismatch, "checkpoint has no model config");
  model::HyKeyNetwork network(model::HyKeyConfig::from_json(ckpt.metadata.at("model")));
  import_weights(network, ckpt);
  return network;
}

}  // namespace hykey
