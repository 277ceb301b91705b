#include <cmath>

#include "hykey/error.hpp"
#include "hykey/ops.hpp"

namespace hykey {

Tensor project_homography(const Tensor& points, const Mat3& h) {
  if (points.rank() != 2 || points.dim(1) != 2) fail(ErrorCode::kDimension, "project_homography expects [N,2]");
  detail::check_finite(points, "project_homography");
  const auto n = points.dim(0);
  Tensor out({n, 2});
  auto p = points.data();
  auto o = out.mutable_data();
  std::vector<double> inv_w(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = p[2 * i], y = p[2 * i + 1];
    const double w = h[6] * x + h[7] * y + h[8];
    if (std::abs(w) <= 1e-12) fail(ErrorCode::kPointAtInfinity, "homography maps point to infinity");
    inv_w[i] = 1.0 / w;
    o[2 * i] = static_cast<float>((h[0] * x + h[1] * y + h[2]) * inv_w[i]);
    o[2 * i + 1] = static_cast<float>((h[3] * x + h[4] * y + h[5]) * inv_w[i]);
  }
  if (auto* tape = detail::recording_tape({&points})) {
    out.set_requires_grad(true);
    tape->record("project_homography", [pn = points.handle(), on = out.handle(), h, inv_w = std::move(inv_w), n] {
      if (on->grad.empty()) return;
      auto& gp = pn->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        const double xp = on->data[2 * i], yp = on->data[2 * i + 1];
        const double gx = on->grad[2 * i], gy = on->grad[2 * i + 1];
        const double iw = inv_w[i];
        gp[2 * i] += static_cast<float>(iw * (gx * (h[0] - xp * h[6]) + gy * (h[3] - yp * h[6])));
        gp[2 * i + 1] += static_cast<float>(iw * (gx * (h[1] - xp * h[7]) + gy * (h[4] - yp * h[7])));
      }
    });
  }
  return out;
}

namespace {

struct SampsonTerms {
  double num, den;
  double a0, a1, b0, b1;
};

SampsonTerms sampson_terms(const Mat3& f, double x0, double y0, double x1, double y1) {
  SampsonTerms t{};
  t.a0 = f[0] * x0 + f[1] * y0 + f[2];
  t.a1 = f[3] * x0 + f[4] * y0 + f[5];
  const double a2 = f[6] * x0 + f[7] * y0 + f[8];
  t.b0 = f[0] * x1 + f[3] * y1 + f[6];
  t.b1 = f[1] * x1 + f[4] * y1 + f[7];
  t.num = x1 * t.a0 + y1 * t.a1 + a2;
  t.den = std::max(t.a0 * t.a0 + t.a1 * t.a1 + t.b0 * t.b0 + t.b1 * t.b1, 1e-18);
  return t;
}

}  // namespace

Tensor sampson_pairwise(const Mat3& f, const Tensor& p0, const Tensor& p1) {
  if (p0.rank() != 2 || p0.dim(1) != 2 || p1.rank() != 2 || p1.dim(1) != 2) {
    fail(ErrorCode::kDimension, "sampson_pairwise expects [N,2] point sets");
  }
  detail::check_finite(p0, "sampson_pairwise");
  detail::check_finite(p1, "sampson_pairwise");
  const auto n0 = p0.dim(0), n1 = p1.dim(0);
  Tensor out({n0, n1});
  auto a = p0.data();
  auto b = p1.data();
  auto o = out.mutable_data();
  for (std::int64_t i = 0; i < n0; ++i)
    for (std::int64_t j = 0; j < n1; ++j) {
      const auto t = sampson_terms(f, a[2 * i], a[2 * i + 1], b[2 * j], b[2 * j + 1]);
      o[i * n1 + j] = static_cast<float>(t.num * t.num / t.den);
    }
  if (auto* tape = detail::recording_tape({&p0, &p1})) {
    out.set_requires_grad(true);
    tape->record("sampson_pairwise", [f, an = p0.handle(), bn = p1.handle(), on = out.handle(), n0, n1] {
      if (on->grad.empty()) return;
      float* g0 = an->requires_grad ? an->ensure_grad().data() : nullptr;
      float* g1 = bn->requires_grad ? bn->ensure_grad().data() : nullptr;
      const auto& a = an->data;
      const auto& b = bn->data;
      for (std::int64_t i = 0; i < n0; ++i)
        for (std::int64_t j = 0; j < n1; ++j) {
          const double g = on->grad[i * n1 + j];
          if (g == 0.0) continue;
          const auto t = sampson_terms(f, a[2 * i], a[2 * i + 1], b[2 * j], b[2 * j + 1]);
          // ds = (2 num dnum den - num^2 dden) / den^2
          const double c_num = 2.0 * t.num / t.den;
          const double c_den = -t.num * t.num / (t.den * t.den);
          if (g0) {
            const double dden_x = 2.0 * (t.a0 * f[0] + t.a1 * f[3]);
            const double dden_y = 2.0 * (t.a0 * f[1] + t.a1 * f[4]);
            g0[2 * i] += static_cast<float>(g * (c_num * t.b0 + c_den * dden_x));
            g0[2 * i + 1] += static_cast<float>(g * (c_num * t.b1 + c_den * dden_y));
          }
          if (g1) {
            const double dden_x = 2.0 * (t.b0 * f[0] + t.b1 * f[1]);
            const double dden_y = 2.0 * (t.b0 * f[3] + t.b1 * f[4]);
            g1[2 * j] += static_cast<float>(g * (c_num * t.a0 + c_den * dden_x));
            g1[2 * j + 1] += static_cast<float>(g * (c_num * t.a1 + c_den * dden_y));
          }
        }
    });
  }
  return out;
}

}  // namespace hykey
