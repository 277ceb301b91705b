#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "hykey/geometry.hpp"
#include "hykey/tensor.hpp"

namespace hykey::matching {

// Cosine similarities of unit-norm descriptor rows: d0 [N0,D] x d1 [N1,D] ->
// [N0,N1]. Differentiable.
Tensor similarity(const Tensor& d0, const Tensor& d1);

struct Match {
  std::size_t i = 0;
  std::size_t j = 0;
  float similarity = 0.0f;
};

// Mutual nearest neighbours of a [N0,N1] similarity matrix; argmax ties go to
// the lowest index. Ordered by i.
std::vector<Match> mnn_match(const Tensor& sim, std::optional<float> min_similarity = std::nullopt);

// Pairs up keypoint coordinates ([N,2] tensors of (x, y)) for each match.
geometry::CorrespondenceSet to_correspondences(const std::vector<Match>& matches, const Tensor& points0,
                                               const Tensor& points1);

}  // namespace hykey::matching
