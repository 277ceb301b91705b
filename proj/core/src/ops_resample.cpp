#include <algorithm>
#include <cmath>

#include "hykey/error.hpp"
#include "hykey/ops.hpp"

namespace hykey {

Tensor maxpool_spatial(const Tensor& x) {
  if (x.rank() != 4) fail(ErrorCode::kDimension, "maxpool_spatial expects [C,S,H,W]");
  const auto c = x.dim(0), s = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto ho = h / 2, wo = w / 2;
  if (ho < 1 || wo < 1) fail(ErrorCode::kDimension, "maxpool_spatial input too small: " + shape_to_string(x.shape()));
  Tensor out({c, s, ho, wo});
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.numel()));
  auto in = x.data();
  auto o = out.mutable_data();
  std::int64_t idx = 0;
  for (std::int64_t plane = 0; plane < c * s; ++plane) {
    const auto base = plane * h * w;
    for (std::int64_t y = 0; y < ho; ++y) {
      for (std::int64_t xx = 0; xx < wo; ++xx, ++idx) {
        std::int64_t best = base + (2 * y) * w + 2 * xx;
        for (std::int64_t dy = 0; dy < 2; ++dy)
          for (std::int64_t dx = 0; dx < 2; ++dx) {
            const auto cand = base + (2 * y + dy) * w + 2 * xx + dx;
            if (in[cand] > in[best]) best = cand;
          }
        o[idx] = in[best];
        argmax[idx] = best;
      }
    }
  }
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("maxpool_spatial", [xn = x.handle(), on = out.handle(), argmax = std::move(argmax)] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += on->grad[i];
    });
  }
  return out;
}

Tensor spectral_mean(const Tensor& x) {
  if (x.rank() != 4) fail(ErrorCode::kDimension, "spectral_mean expects [C,S,H,W]");
  const auto c = x.dim(0), s = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out({c, x.dim(2), x.dim(3)});
  auto in = x.data();
  auto o = out.mutable_data();
  const float inv = 1.0f / static_cast<float>(s);
  for (std::int64_t k = 0; k < c; ++k)
    for (std::int64_t p = 0; p < hw; ++p) {
      double acc = 0.0;
      for (std::int64_t b = 0; b < s; ++b) acc += in[(k * s + b) * hw + p];
      o[k * hw + p] = static_cast<float>(acc) * inv;
    }
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("spectral_mean", [xn = x.handle(), on = out.handle(), c, s, hw, inv] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      for (std::int64_t k = 0; k < c; ++k)
        for (std::int64_t b = 0; b < s; ++b)
          for (std::int64_t p = 0; p < hw; ++p) gx[(k * s + b) * hw + p] += on->grad[k * hw + p] * inv;
    });
  }
  return out;
}

namespace {

struct LinearTap {
  std::int64_t i0, i1;
  float w0, w1;
};

std::vector<LinearTap> linear_taps(std::int64_t in, std::int64_t out) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    i0 = std::min(i0, in - 1);
    const auto i1 = std::min(i0 + 1, in - 1);
    const auto l1 = static_cast<float>(src - static_cast<double>(i0));
    taps[d] = {i0, i1, 1.0f - l1, l1};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  if (x.rank() != 3) fail(ErrorCode::kDimension, "upsample_bilinear expects [C,H,W]");
  if (out_h < 1 || out_w < 1) fail(ErrorCode::kDimension, "upsample target must be >= 1");
  const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto ty = linear_taps(h, out_h);
  auto tx = linear_taps(w, out_w);
  Tensor out({c, out_h, out_w});
  auto in = x.data();
  auto o = out.mutable_data();
  for (std::int64_t k = 0; k < c; ++k) {
    const float* plane = in.data() + k * h * w;
    float* dst = o.data() + k * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      const float* r0 = plane + a.i0 * w;
      const float* r1 = plane + a.i1 * w;
      for (std::int64_t xx = 0; xx < out_w; ++xx) {
        const auto& b = tx[xx];
        dst[y * out_w + xx] = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) + a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
      }
    }
  }
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("upsample_bilinear", [xn = x.handle(), on = out.handle(), c, h, w, out_h, out_w, ty = std::move(ty),
                                       tx = std::move(tx)] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      for (std::int64_t k = 0; k < c; ++k) {
        float* plane = gx.data() + k * h * w;
        const float* g = on->grad.data() + k * out_h * out_w;
        for (std::int64_t y = 0; y < out_h; ++y) {
          const auto& a = ty[y];
          for (std::int64_t xx = 0; xx < out_w; ++xx) {
            const auto& b = tx[xx];
            const float v = g[y * out_w + xx];
            plane[a.i0 * w + b.i0] += a.w0 * b.w0 * v;
            plane[a.i0 * w + b.i1] += a.w0 * b.w1 * v;
            plane[a.i1 * w + b.i0] += a.w1 * b.w0 * v;
            plane[a.i1 * w + b.i1] += a.w1 * b.w1 * v;
          }
        }
      }
    });
  }
  return out;
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool training) {
  if (x.rank() != 3) fail(ErrorCode::kDimension, "batchnorm2d expects [C,H,W]");
  const auto c = x.dim(0);
  const auto n = x.dim(1) * x.dim(2);
  if (gamma.numel() != c || beta.numel() != c || static_cast<std::int64_t>(state.running_mean.size()) != c) {
    fail(ErrorCode::kDimension, "batchnorm2d parameter size mismatch");
  }
  detail::check_finite(x, "batchnorm2d");
  std::vector<float> mean_c(static_cast<std::size_t>(c));
  std::vector<float> inv_c(static_cast<std::size_t>(c));
  auto in = x.data();
  for (std::int64_t k = 0; k < c; ++k) {
    if (training) {
      double m = 0.0;
      for (std::int64_t p = 0; p < n; ++p) m += in[k * n + p];
      m /= static_cast<double>(n);
      double v = 0.0;
      for (std::int64_t p = 0; p < n; ++p) {
        const double d = in[k * n + p] - m;
        v += d * d;
      }
      v /= static_cast<double>(n);
      mean_c[k] = static_cast<float>(m);
      inv_c[k] = static_cast<float>(1.0 / std::sqrt(v + state.eps));
      const double unbiased = n > 1 ? v * static_cast<double>(n) / static_cast<double>(n - 1) : v;
      state.running_mean[k] = static_cast<float>((1.0 - state.momentum) * state.running_mean[k] + state.momentum * m);
      state.running_var[k] = static_cast<float>((1.0 - state.momentum) * state.running_var[k] + state.momentum * unbiased);
    } else {
      mean_c[k] = state.running_mean[k];
      inv_c[k] = 1.0f / std::sqrt(state.running_var[k] + state.eps);
    }
  }
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto gm = gamma.data();
  auto bt = beta.data();
  for (std::int64_t k = 0; k < c; ++k)
    for (std::int64_t p = 0; p < n; ++p) o[k * n + p] = gm[k] * (in[k * n + p] - mean_c[k]) * inv_c[k] + bt[k];

  if (auto* tape = detail::recording_tape({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape->record("batchnorm2d", [xn = x.handle(), gn = gamma.handle(), bn = beta.handle(), on = out.handle(), c, n,
                                 mean_c = std::move(mean_c), inv_c = std::move(inv_c), training] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      for (std::int64_t k = 0; k < c; ++k) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::int64_t p = 0; p < n; ++p) {
          const double xhat = (xn->data[k * n + p] - mean_c[k]) * inv_c[k];
          sum_g += g[k * n + p];
          sum_gx += g[k * n + p] * xhat;
        }
        if (gn->requires_grad) gn->ensure_grad()[k] += static_cast<float>(sum_gx);
        if (bn->requires_grad) bn->ensure_grad()[k] += static_cast<float>(sum_g);
        if (!xn->requires_grad) continue;
        auto& gx = xn->ensure_grad();
        const double scale_k = gn->data[k] * inv_c[k];
        if (training) {
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::int64_t p = 0; p < n; ++p) {
            const double xhat = (xn->data[k * n + p] - mean_c[k]) * inv_c[k];
            gx[k * n + p] += static_cast<float>(scale_k * (g[k * n + p] - inv_n * sum_g - xhat * inv_n * sum_gx));
          }
        } else {
          for (std::int64_t p = 0; p < n; ++p) gx[k * n + p] += static_cast<float>(scale_k * g[k * n + p]);
        }
      }
    });
  }
  return out;
}

namespace {

struct BilinearSite {
  std::int64_t x0, x1, y0, y1;
  float fx, fy;
  bool free_x, free_y;  // false when the coordinate was clamped
};

BilinearSite bilinear_site(float px, float py, std::int64_t h, std::int64_t w) {
  BilinearSite s{};
  const float max_x = static_cast<float>(w - 1);
  const float max_y = static_cast<float>(h - 1);
  s.free_x = px >= 0.0f && px <= max_x && w > 1;
  s.free_y = py >= 0.0f && py <= max_y && h > 1;
  const float x = std::clamp(px, 0.0f, max_x);
  const float y = std::clamp(py, 0.0f, max_y);
  s.x0 = w > 1 ? std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(x)), w - 2) : 0;
  s.y0 = h > 1 ? std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(y)), h - 2) : 0;
  s.x1 = std::min(s.x0 + 1, w - 1);
  s.y1 = std::min(s.y0 + 1, h - 1);
  s.fx = x - static_cast<float>(s.x0);
  s.fy = y - static_cast<float>(s.y0);
  return s;
}

}  // namespace

Tensor grid_sample2d(const Tensor& map, const Tensor& points) {
  if (map.rank() != 3) fail(ErrorCode::kDimension, "grid_sample2d map must be [D,H,W]");
  if (points.rank() != 2 || points.dim(1) != 2) fail(ErrorCode::kDimension, "grid_sample2d points must be [N,2]");
  detail::check_finite(points, "grid_sample2d");
  const auto d = map.dim(0), h = map.dim(1), w = map.dim(2);
  const auto n = points.dim(0);
  Tensor out({n, d});
  auto m = map.data();
  auto pts = points.data();
  auto o = out.mutable_data();
  std::vector<BilinearSite> sites(static_cast<std::size_t>(n));
  const auto hw = h * w;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto s = bilinear_site(pts[2 * i], pts[2 * i + 1], h, w);
    sites[i] = s;
    const float w00 = (1 - s.fx) * (1 - s.fy), w01 = s.fx * (1 - s.fy), w10 = (1 - s.fx) * s.fy, w11 = s.fx * s.fy;
    for (std::int64_t k = 0; k < d; ++k) {
      const float* plane = m.data() + k * hw;
      o[i * d + k] = w00 * plane[s.y0 * w + s.x0] + w01 * plane[s.y0 * w + s.x1] + w10 * plane[s.y1 * w + s.x0] +
                     w11 * plane[s.y1 * w + s.x1];
    }
  }
  if (auto* tape = detail::recording_tape({&map, &points})) {
    out.set_requires_grad(true);
    tape->record("grid_sample2d", [mn = map.handle(), pn = points.handle(), on = out.handle(), sites = std::move(sites),
                                   d, w, hw, n] {
      if (on->grad.empty()) return;
      const auto& g = on->grad;
      float* gm = mn->requires_grad ? mn->ensure_grad().data() : nullptr;
      float* gp = pn->requires_grad ? pn->ensure_grad().data() : nullptr;
      for (std::int64_t i = 0; i < n; ++i) {
        const auto& s = sites[i];
        const float w00 = (1 - s.fx) * (1 - s.fy), w01 = s.fx * (1 - s.fy), w10 = (1 - s.fx) * s.fy,
                    w11 = s.fx * s.fy;
        double dx = 0.0, dy = 0.0;
        for (std::int64_t k = 0; k < d; ++k) {
          const float gv = g[i * d + k];
          const float* plane = mn->data.data() + k * hw;
          const float v00 = plane[s.y0 * w + s.x0], v01 = plane[s.y0 * w + s.x1], v10 = plane[s.y1 * w + s.x0],
                      v11 = plane[s.y1 * w + s.x1];
          if (gm) {
            float* gplane = gm + k * hw;
            gplane[s.y0 * w + s.x0] += w00 * gv;
            gplane[s.y0 * w + s.x1] += w01 * gv;
            gplane[s.y1 * w + s.x0] += w10 * gv;
            gplane[s.y1 * w + s.x1] += w11 * gv;
          }
          dx += gv * ((1 - s.fy) * (v01 - v00) + s.fy * (v11 - v10));
          dy += gv * ((1 - s.fx) * (v10 - v00) + s.fx * (v11 - v01));
        }
        if (gp) {
          if (s.free_x) gp[2 * i] += static_cast<float>(dx);
          if (s.free_y) gp[2 * i + 1] += static_cast<float>(dy);
        }
      }
    });
  }
  return out;
}

Tensor gather_windows(const Tensor& map, std::span<const PixelIndex> centres, int radius) {
  if (map.rank() != 2) fail(ErrorCode::kDimension, "gather_windows map must be [H,W]");
  if (radius < 0) fail(ErrorCode::kUsage, "gather_windows radius must be >= 0");
  const auto h = map.dim(0), w = map.dim(1);
  const int side = 2 * radius + 1;
  const auto taps = static_cast<std::int64_t>(side) * side;
  const auto n = static_cast<std::int64_t>(centres.size());
  std::vector<std::int64_t> index(static_cast<std::size_t>(n * taps));
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t t = 0;
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx, ++t) {
        const auto y = std::clamp<std::int64_t>(centres[i].y + dy, 0, h - 1);
        const auto x = std::clamp<std::int64_t>(centres[i].x + dx, 0, w - 1);
        index[i * taps + t] = y * w + x;
      }
  }
  return reshape(take(map, index), Shape{n, taps});
}

}  // namespace hykey
