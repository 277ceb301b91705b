#include <Eigen/Core>
#include <algorithm>

#include "hykey/error.hpp"
#include "hykey/ops.hpp"

namespace hykey {

namespace {

using ColMatrix = Eigen::MatrixXf;
using StridedMap = Eigen::Map<ColMatrix, 0, Eigen::OuterStride<>>;
using StridedMapC = Eigen::Map<const ColMatrix, 0, Eigen::OuterStride<>>;

constexpr std::int64_t kTilePixels = 4096;

// Zero-padded correlation with kernel extents (ks,kh,kw) over a [Cin,S,H,W]
// volume. conv2d is the ks=1 / ps=0 special case.
struct ConvGeometry {
  std::int64_t cin, s, h, w;
  int ks, kh, kw;
  int ss, sh, sw;
  int ps, ph, pw;
  std::int64_t so, ho, wo;

  std::int64_t taps() const { return static_cast<std::int64_t>(ks) * kh * kw; }
  std::int64_t k() const { return cin * taps(); }
  std::int64_t pixels() const { return so * ho * wo; }
};

std::int64_t out_extent(std::int64_t extent, int kernel, int stride, int pad) {
  return std::max<std::int64_t>((extent + 2 * pad - kernel) / stride + 1, 1);
}

// Rows [row0, row1) of the flattened (so*ho) output grid, laid out [K][T].
void im2col(const ConvGeometry& g, const float* in, std::int64_t row0, std::int64_t row1, float* cols) {
  const std::int64_t t_count = (row1 - row0) * g.wo;
  std::int64_t k = 0;
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    for (int a = 0; a < g.ks; ++a) {
      for (int b = 0; b < g.kh; ++b) {
        for (int c = 0; c < g.kw; ++c, ++k) {
          float* dst = cols + k * t_count;
          for (std::int64_t row = row0; row < row1; ++row) {
            const std::int64_t os = row / g.ho;
            const std::int64_t oh = row % g.ho;
            const std::int64_t is = os * g.ss - g.ps + a;
            const std::int64_t ih = oh * g.sh - g.ph + b;
            float* out_row = dst + (row - row0) * g.wo;
            if (is < 0 || is >= g.s || ih < 0 || ih >= g.h) {
              std::fill_n(out_row, g.wo, 0.0f);
              continue;
            }
            const float* src = in + ((ci * g.s + is) * g.h + ih) * g.w;
            for (std::int64_t ow = 0; ow < g.wo; ++ow) {
              const std::int64_t iw = ow * g.sw - g.pw + c;
              out_row[ow] = (iw >= 0 && iw < g.w) ? src[iw] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const float* cols, std::int64_t row0, std::int64_t row1, float* grad_in) {
  const std::int64_t t_count = (row1 - row0) * g.wo;
  std::int64_t k = 0;
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    for (int a = 0; a < g.ks; ++a) {
      for (int b = 0; b < g.kh; ++b) {
        for (int c = 0; c < g.kw; ++c, ++k) {
          const float* src = cols + k * t_count;
          for (std::int64_t row = row0; row < row1; ++row) {
            const std::int64_t os = row / g.ho;
            const std::int64_t oh = row % g.ho;
            const std::int64_t is = os * g.ss - g.ps + a;
            const std::int64_t ih = oh * g.sh - g.ph + b;
            if (is < 0 || is >= g.s || ih < 0 || ih >= g.h) continue;
            float* dst = grad_in + ((ci * g.s + is) * g.h + ih) * g.w;
            const float* col_row = src + (row - row0) * g.wo;
            for (std::int64_t ow = 0; ow < g.wo; ++ow) {
              const std::int64_t iw = ow * g.sw - g.pw + c;
              if (iw >= 0 && iw < g.w) dst[iw] += col_row[ow];
            }
          }
        }
      }
    }
  }
}

template <class Body>
void for_each_tile(const ConvGeometry& g, Body body) {
  const std::int64_t rows = g.so * g.ho;
  const std::int64_t rows_per_tile = std::max<std::int64_t>(1, kTilePixels / std::max<std::int64_t>(g.wo, 1));
  for (std::int64_t r0 = 0; r0 < rows; r0 += rows_per_tile) body(r0, std::min(rows, r0 + rows_per_tile));
}

Tensor conv_generic(const char* name, const ConvGeometry& g, const Tensor& input, const Tensor& weight,
                    const Tensor& bias, const Shape& out_shape) {
  const auto cout = weight.dim(0);
  const auto kdim = g.k();
  const auto pixels = g.pixels();
  Tensor out(out_shape);
  {
    std::vector<float> cols;
    const float* in = input.data().data();
    const StridedMapC wmap(weight.data().data(), kdim, cout, Eigen::OuterStride<>(kdim));
    float* o = out.mutable_data().data();
    for_each_tile(g, [&](std::int64_t r0, std::int64_t r1) {
      const std::int64_t t = (r1 - r0) * g.wo;
      cols.resize(static_cast<std::size_t>(kdim * t));
      im2col(g, in, r0, r1, cols.data());
      StridedMap otile(o + r0 * g.wo, t, cout, Eigen::OuterStride<>(pixels));
      otile.noalias() = StridedMapC(cols.data(), t, kdim, Eigen::OuterStride<>(t)) * wmap;
    });
    auto b = bias.data();
    for (std::int64_t co = 0; co < cout; ++co) {
      float* row = o + co * pixels;
      for (std::int64_t p = 0; p < pixels; ++p) row[p] += b[co];
    }
  }
  if (auto* tape = detail::recording_tape({&input, &weight, &bias})) {
    out.set_requires_grad(true);
    tape->record(name, [g, in = input.handle(), wn = weight.handle(), bn = bias.handle(), on = out.handle(), cout] {
      if (on->grad.empty()) return;
      const auto kdim = g.k();
      const auto pixels = g.pixels();
      const float* go = on->grad.data();
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::int64_t co = 0; co < cout; ++co) {
          double acc = 0.0;
          for (std::int64_t p = 0; p < pixels; ++p) acc += go[co * pixels + p];
          gb[co] += static_cast<float>(acc);
        }
      }
      const bool need_w = wn->requires_grad;
      const bool need_in = in->requires_grad;
      if (!need_w && !need_in) return;
      float* gw = need_w ? wn->ensure_grad().data() : nullptr;
      float* gi = need_in ? in->ensure_grad().data() : nullptr;
      const StridedMapC wmap(wn->data.data(), kdim, cout, Eigen::OuterStride<>(kdim));
      std::vector<float> cols;
      std::vector<float> dcols;
      for_each_tile(g, [&](std::int64_t r0, std::int64_t r1) {
        const std::int64_t t = (r1 - r0) * g.wo;
        const StridedMapC gtile(go + r0 * g.wo, t, cout, Eigen::OuterStride<>(pixels));
        if (need_w) {
          cols.resize(static_cast<std::size_t>(kdim * t));
          im2col(g, in->data.data(), r0, r1, cols.data());
          StridedMap(gw, kdim, cout, Eigen::OuterStride<>(kdim)).noalias() +=
              StridedMapC(cols.data(), t, kdim, Eigen::OuterStride<>(t)).transpose() * gtile;
        }
        if (need_in) {
          dcols.resize(static_cast<std::size_t>(kdim * t));
          StridedMap(dcols.data(), t, kdim, Eigen::OuterStride<>(t)).noalias() = gtile * wmap.transpose();
          col2im(g, dcols.data(), r0, r1, gi);
        }
      });
    });
  }
  return out;
}

}  // namespace

std::int64_t conv_output_extent(std::int64_t extent, int stride) { return out_extent(extent, 3, stride, 1); }

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, Stride3 stride) {
  if (input.rank() != 4) fail(ErrorCode::kDimension, "conv3d input must be [Cin,S,H,W], got " + shape_to_string(input.shape()));
  if (weight.rank() != 5 || weight.dim(2) != 3 || weight.dim(3) != 3 || weight.dim(4) != 3) {
    fail(ErrorCode::kDimension, "conv3d weight must be [Cout,Cin,3,3,3], got " + shape_to_string(weight.shape()));
  }
  if (weight.dim(1) != input.dim(0)) {
    fail(ErrorCode::kDimension, "conv3d channel mismatch: weight " + shape_to_string(weight.shape()) + " vs input " +
                                    shape_to_string(input.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) fail(ErrorCode::kDimension, "conv3d bias shape mismatch");
  if (stride.spectral < 1 || stride.height < 1 || stride.width < 1) fail(ErrorCode::kUsage, "conv3d stride must be >= 1");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), 3, 3, 3, stride.spectral, stride.height,
                 stride.width, 1, 1, 1, 0, 0, 0};
  g.so = out_extent(g.s, 3, g.ss, 1);
  g.ho = out_extent(g.h, 3, g.sh, 1);
  g.wo = out_extent(g.w, 3, g.sw, 1);
  return conv_generic("conv3d", g, input, weight, bias, Shape{weight.dim(0), g.so, g.ho, g.wo});
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 3) fail(ErrorCode::kDimension, "conv2d input must be [Cin,H,W], got " + shape_to_string(input.shape()));
  if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3) {
    fail(ErrorCode::kDimension, "conv2d weight must be [Cout,Cin,3,3], got " + shape_to_string(weight.shape()));
  }
  if (weight.dim(1) != input.dim(0)) {
    fail(ErrorCode::kDimension, "conv2d channel mismatch: weight " + shape_to_string(weight.shape()) + " vs input " +
                                    shape_to_string(input.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) fail(ErrorCode::kDimension, "conv2d bias shape mismatch");
  ConvGeometry g{input.dim(0), 1, input.dim(1), input.dim(2), 1, 3, 3, 1, 1, 1, 0, 1, 1, 1, input.dim(1), input.dim(2)};
  return conv_generic("conv2d", g, input, weight, bias, Shape{weight.dim(0), g.ho, g.wo});
}

}  // namespace hykey
