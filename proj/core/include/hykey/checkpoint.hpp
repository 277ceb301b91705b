#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "hykey/model.hpp"

namespace hykey {

// File layout: magic "HYKYCKPT", u32 LE metadata length, JSON metadata (with a
// "blobs" table of name/shape/offset/count), then the little-endian float32
// blob payload.
struct Checkpoint {
  struct Blob {
    std::string name;
    Shape shape;
    std::vector<float> data;
  };

  nlohmann::json metadata = nlohmann::json::object();
  std::vector<Blob> blobs;

  const Blob* find(const std::string& name) const;
  void add(std::string name, Shape shape, std::span<const float> data);
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Stores parameters as "param/<name>", batchnorm statistics as
// "bn/running_mean" and "bn/running_var", and the config under
// metadata["model"].
void export_network(const model::HyKeyNetwork& network, Checkpoint& ckpt);
// Refuses (kCheckpointMismatch) any missing blob or one whose shape disagrees
// with the network built from metadata["model"].
model::HyKeyNetwork import_network(const Checkpoint& ckpt);
void import_weights(model::HyKeyNetwork& network, const Checkpoint& ckpt);

}  // namespace hykey
