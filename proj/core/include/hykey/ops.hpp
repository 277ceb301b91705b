#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "hykey/tensor.hpp"

// Differentiable operations. Every function records a backward closure on the
// current tape when one of its tensor inputs requires a gradient.
namespace hykey {

// ---- elementwise -----------------------------------------------------------

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, float factor);
Tensor add_scalar(const Tensor& x, float value);

// e²/2 for |e| <= delta, delta(|e| - delta/2) beyond.
Tensor huber(const Tensor& x, float delta);

// -(t log p + (1 - t) log(1 - p)) per element; target is a constant and p is
// clamped to [1e-7, 1 - 1e-7].
Tensor binary_cross_entropy(const Tensor& prob, std::span<const float> target);

// numpy-style broadcasting binary ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// ---- reductions / axis ops ------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

struct NormalizeResult {
  Tensor value;
  std::int64_t zero_vectors = 0;  // inputs with zero norm, emitted as zeros
};
NormalizeResult l2_normalize(const Tensor& x, std::size_t axis);

// ---- shape / indexing ------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose2d(const Tensor& x);
// Concatenates along the leading axis.
Tensor concat(std::span<const Tensor> parts);
// Slice [start, start + length) of the leading axis.
Tensor narrow(const Tensor& x, std::int64_t start, std::int64_t length);
// Top-left spatial crop of a [C,H,W] tensor.
Tensor crop2d(const Tensor& x, std::int64_t height, std::int64_t width);
// Rows of the leading axis, in the given order.
Tensor index_select(const Tensor& x, std::span<const std::int64_t> rows);
// Elements by flat row-major index; output is 1-D.
Tensor take(const Tensor& x, std::span<const std::int64_t> flat_indices);

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [N,K] x [K,M]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [N,K] x [M,K]^T

// ---- convolution / pooling / resampling -------------------------------------

struct Stride3 {
  int spectral = 1;
  int height = 1;
  int width = 1;
};

// input [Cin,S,H,W], weight [Cout,Cin,3,3,3], bias [Cout]; zero padding 1.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, Stride3 stride);
// input [Cin,H,W], weight [Cout,Cin,3,3], bias [Cout]; stride 1, padding 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

std::int64_t conv_output_extent(std::int64_t extent, int stride);

// [C,S,H,W] -> [C,S,H/2,W/2]; kernel (1,2,2), floor on odd extents.
Tensor maxpool_spatial(const Tensor& x);
// [C,S,H,W] -> [C,H,W], mean over the spectral axis.
Tensor spectral_mean(const Tensor& x);
// [C,H,W] -> [C,out_h,out_w], align-corners-false bilinear.
Tensor upsample_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w);

struct BatchNormState {
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0f), running_var(channels, 1.0f) {}
};

// [C,H,W]; training uses the spatial statistics of x and updates the running
// estimates, evaluation uses the frozen running estimates.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                   bool training);

// Bilinear sampling of map [D,H,W] at sub-pixel points [N,2] given as (x,y);
// points are clamped into [0,W-1]x[0,H-1]. Differentiable in map and points.
Tensor grid_sample2d(const Tensor& map, const Tensor& points);

struct PixelIndex {
  std::int64_t x = 0;
  std::int64_t y = 0;
};
// Square windows of map [H,W] centred on integer pixels -> [N,(2r+1)^2],
// row-major over (dy, dx). Out-of-bounds taps read the nearest border pixel.
Tensor gather_windows(const Tensor& map, std::span<const PixelIndex> centres, int radius);

// ---- geometry -------------------------------------------------------------

using Mat3 = std::array<double, 9>;  // row-major

// points [N,2] -> H applied in homogeneous coordinates.
Tensor project_homography(const Tensor& points, const Mat3& h);
// Sampson distances of all pairs: [N0,2] x [N1,2] -> [N0,N1].
Tensor sampson_pairwise(const Mat3& f, const Tensor& p0, const Tensor& p1);

}  // namespace hykey
