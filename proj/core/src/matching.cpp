#include "hykey/matching.hpp"

#include "hykey/error.hpp"
#include "hykey/ops.hpp"

namespace hykey::matching {

Tensor similarity(const Tensor& d0, const Tensor& d1) {
  if (d0.rank() != 2 || d1.rank() != 2 || d0.dim(1) != d1.dim(1)) {
    fail(ErrorCode::kDimension, "descriptor sets " + shape_to_string(d0.shape()) + " and " +
                                    shape_to_string(d1.shape()) + " are not comparable");
  }
  return matmul_nt(d0, d1);
}

std::vector<Match> mnn_match(const Tensor& sim, std::optional<float> min_similarity) {
  if (sim.rank() != 2) fail(ErrorCode::kDimension, "similarity matrix must be 2-D");
  const auto n0 = static_cast<std::size_t>(sim.dim(0));
  const auto n1 = static_cast<std::size_t>(sim.dim(1));
  std::vector<Match> out;
  if (n0 == 0 || n1 == 0) return out;
  auto m = sim.data();
  std::vector<std::size_t> row_best(n0, 0), col_best(n1, 0);
  for (std::size_t i = 0; i < n0; ++i) {
    for (std::size_t j = 1; j < n1; ++j) {
      if (m[i * n1 + j] > m[i * n1 + row_best[i]]) row_best[i] = j;
    }
  }
  for (std::size_t j = 0; j < n1; ++j) {
    for (std::size_t i = 1; i < n0; ++i) {
      if (m[i * n1 + j] > m[col_best[j] * n1 + j]) col_best[j] = i;
    }
  }
  for (std::size_t i = 0; i < n0; ++i) {
    const std::size_t j = row_best[i];
    if (col_best[j] != i) continue;
    const float s = m[i * n1 + j];
    if (min_similarity && s < *min_similarity) continue;
    out.push_back({i, j, s});
  }
  return out;
}

geometry::CorrespondenceSet to_correspondences(const std::vector<Match>& matches, const Tensor& points0,
                                               const Tensor& points1) {
  auto p0 = points0.data();
  auto p1 = points1.data();
  geometry::CorrespondenceSet out;
  out.reserve(matches.size());
  for (const auto& mt : matches) {
    out.push_back({geometry::Vec2(p0[2 * mt.i], p0[2 * mt.i + 1]), geometry::Vec2(p1[2 * mt.j], p1[2 * mt.j + 1]),
                   mt.similarity});
  }
  return out;
}

}  // namespace hykey::matching
