#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hykey/error.hpp"
#include "hykey/tensor.hpp"

namespace hykey::testing {

struct GradCheck {
  double relative_error = 0.0;  // ||analytic - numeric|| / max(norms)
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  std::size_t probes = 0;
};

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares the tape gradient of sum(w * f(inputs)) for a fixed random w with
// Richardson-extrapolated central differences of step `eps`, over at most
// `max_probes` randomly chosen elements per input. Inputs flagged false in `differentiable` are constants.
GradCheck gradcheck(const TensorFn& f, std::vector<Tensor> inputs, std::uint64_t seed, double eps = 1e-2,
                    std::size_t max_probes = 48, std::vector<bool> differentiable = {});

// Uniform values in [lo, hi).
Tensor random_tensor(const Shape& shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f);
// Same, but every value at least `gap` away from zero (for kinked ops).
Tensor random_away_from_zero(const Shape& shape, std::uint64_t seed, float gap = 0.05f);

// A fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// Code of the Error thrown by fn, or nullopt when it returns normally.
template <class Fn>
std::optional<ErrorCode> code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace hykey::testing
