#include <algorithm>
#include <cmath>

#include "hykey/error.hpp"
#include "hykey/ops.hpp"

namespace hykey {

namespace {

using Node = detail::TensorNode;
using NodePtr = std::shared_ptr<Node>;

// y = f(x) with dy/dx = g(x, y).
template <class Forward, class Derivative>
Tensor unary(const Tensor& x, const char* name, Forward forward, Derivative derivative) {
  detail::check_finite(x, name);
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = forward(in[i]);
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record(name, [xn = x.handle(), on = out.handle(), derivative] {
      if (!xn->requires_grad || on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += on->grad[i] * derivative(xn->data[i], on->data[i]);
    });
  }
  return out;
}

struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t length = 1;
  std::int64_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) fail(ErrorCode::kDimension, "axis out of range for " + shape_to_string(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

struct Broadcast {
  Shape out;
  std::vector<std::int64_t> stride_a;
  std::vector<std::int64_t> stride_b;
  bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  plan.stride_a.assign(rank, 0);
  plan.stride_b.assign(rank, 0);
  auto extent = [rank](const Shape& s, std::size_t i) -> std::int64_t {
    const std::size_t offset = rank - s.size();
    return i < offset ? 1 : s[i - offset];
  };
  for (std::size_t i = 0; i < rank; ++i) {
    const auto ea = extent(a, i);
    const auto eb = extent(b, i);
    if (ea != eb && ea != 1 && eb != 1) {
      fail(ErrorCode::kDimension, "cannot broadcast " + shape_to_string(a) + " with " + shape_to_string(b));
    }
    plan.out[i] = std::max(ea, eb);
  }
  std::int64_t sa = 1;
  std::int64_t sb = 1;
  for (std::size_t k = rank; k-- > 0;) {
    const auto ea = extent(a, k);
    const auto eb = extent(b, k);
    plan.stride_a[k] = ea == 1 ? 0 : sa;
    plan.stride_b[k] = eb == 1 ? 0 : sb;
    sa *= ea;
    sb *= eb;
  }
  return plan;
}

// Calls visit(out_index, a_index, b_index) for each output element in order.
template <class Visit>
void for_each_broadcast(const Broadcast& plan, Visit visit) {
  const auto n = shape_numel(plan.out);
  if (plan.same) {
    for (std::int64_t i = 0; i < n; ++i) visit(i, i, i);
    return;
  }
  const std::size_t rank = plan.out.size();
  std::vector<std::int64_t> counter(rank, 0);
  std::int64_t ia = 0;
  std::int64_t ib = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    visit(i, ia, ib);
    for (std::size_t k = rank; k-- > 0;) {
      ++counter[k];
      ia += plan.stride_a[k];
      ib += plan.stride_b[k];
      if (counter[k] < plan.out[k]) break;
      ia -= plan.stride_a[k] * counter[k];
      ib -= plan.stride_b[k] * counter[k];
      counter[k] = 0;
    }
  }
}

// out = f(a, b); da += g * dfa(a, b), db += g * dfb(a, b).
template <class Forward, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Forward forward, DA dfa, DB dfb) {
  detail::check_finite(a, name);
  detail::check_finite(b, name);
  auto plan = plan_broadcast(a.shape(), b.shape());
  Tensor out(plan.out);
  {
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.mutable_data();
    for_each_broadcast(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { od[i] = forward(ad[ia], bd[ib]); });
  }
  if (auto* tape = detail::recording_tape({&a, &b})) {
    out.set_requires_grad(true);
    tape->record(name, [an = a.handle(), bn = b.handle(), on = out.handle(), plan, dfa, dfb] {
      if (on->grad.empty()) return;
      const bool need_a = an->requires_grad;
      const bool need_b = bn->requires_grad;
      std::vector<float>* ga = need_a ? &an->ensure_grad() : nullptr;
      std::vector<float>* gb = need_b ? &bn->ensure_grad() : nullptr;
      for_each_broadcast(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
        const float g = on->grad[i];
        if (ga) (*ga)[ia] += g * dfa(an->data[ia], bn->data[ib]);
        if (gb) (*gb)[ib] += g * dfb(an->data[ia], bn->data[ib]);
      });
    });
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](float v) {
        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
        const float e = std::exp(v);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](float v) { return std::exp(v); }, [](float, float y) { return y; });
}

Tensor log(const Tensor& x) {
  for (float v : x.data()) {
    if (!(v > 0.0f)) fail(ErrorCode::kNonFinite, "log of non-positive value");
  }
  return unary(
      x, "log", [](float v) { return std::log(v); }, [](float v, float) { return 1.0f / v; });
}

Tensor sqrt(const Tensor& x) {
  for (float v : x.data()) {
    if (v < 0.0f) fail(ErrorCode::kNonFinite, "sqrt of negative value");
  }
  return unary(
      x, "sqrt", [](float v) { return std::sqrt(v); },
      [](float, float y) { return y > 0.0f ? 0.5f / y : 0.0f; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](float v) { return v * v; }, [](float v, float) { return 2.0f * v; });
}

Tensor neg(const Tensor& x) {
  return unary(
      x, "neg", [](float v) { return -v; }, [](float, float) { return -1.0f; });
}

Tensor scale(const Tensor& x, float factor) {
  return unary(
      x, "scale", [factor](float v) { return v * factor; }, [factor](float, float) { return factor; });
}

Tensor add_scalar(const Tensor& x, float value) {
  return unary(
      x, "add_scalar", [value](float v) { return v + value; }, [](float, float) { return 1.0f; });
}

Tensor huber(const Tensor& x, float delta) {
  if (!(delta > 0.0f)) fail(ErrorCode::kUsage, "huber delta must be positive");
  return unary(
      x, "huber",
      [delta](float e) {
        const float a = std::abs(e);
        return a <= delta ? 0.5f * e * e : delta * (a - 0.5f * delta);
      },
      [delta](float e, float) {
        if (std::abs(e) <= delta) return e;
        return e > 0.0f ? delta : -delta;
      });
}

Tensor binary_cross_entropy(const Tensor& prob, std::span<const float> target) {
  if (static_cast<std::int64_t>(target.size()) != prob.numel()) {
    fail(ErrorCode::kDimension, "bce target size mismatch");
  }
  detail::check_finite(prob, "binary_cross_entropy");
  constexpr float kEps = 1e-7f;
  Tensor out(prob.shape());
  auto p = prob.data();
  auto o = out.mutable_data();
  std::vector<float> t(target.begin(), target.end());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(static_cast<double>(p[i]), 1e-7, 1.0 - 1e-7);
    o[i] = static_cast<float>(-(t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q)));
  }
  if (auto* tape = detail::recording_tape({&prob})) {
    out.set_requires_grad(true);
    tape->record("binary_cross_entropy", [pn = prob.handle(), on = out.handle(), t = std::move(t)] {
      if (on->grad.empty()) return;
      auto& gp = pn->ensure_grad();
      for (std::size_t i = 0; i < gp.size(); ++i) {
        const double q = pn->data[i];
        if (q < kEps || q > 1.0 - kEps) continue;
        gp[i] += static_cast<float>(on->grad[i] * (q - t[i]) / (q * (1.0 - q)));
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](float x, float y) { return x + y; }, [](float, float) { return 1.0f; },
      [](float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](float x, float y) { return x - y; }, [](float, float) { return 1.0f; },
      [](float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](float x, float y) { return x * y; }, [](float, float y) { return y; },
      [](float x, float) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (float v : b.data()) {
    if (v == 0.0f) fail(ErrorCode::kNonFinite, "division by zero");
  }
  return binary(
      a, b, "div", [](float x, float y) { return x / y; }, [](float, float y) { return 1.0f / y; },
      [](float x, float y) { return -x / (y * y); });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("sum", [xn = x.handle(), on = out.handle()] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      const float g = on->grad[0];
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) fail(ErrorCode::kUsage, "mean of empty tensor");
  return scale(sum(x), 1.0f / static_cast<float>(x.numel()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  const auto split = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape);
  auto in = x.data();
  auto o = out.mutable_data();
  for (std::int64_t a = 0; a < split.outer; ++a) {
    for (std::int64_t c = 0; c < split.inner; ++c) {
      double acc = 0.0;
      for (std::int64_t l = 0; l < split.length; ++l) acc += in[(a * split.length + l) * split.inner + c];
      o[a * split.inner + c] = static_cast<float>(acc);
    }
  }
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("sum_axis", [xn = x.handle(), on = out.handle(), split] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      for (std::int64_t a = 0; a < split.outer; ++a)
        for (std::int64_t l = 0; l < split.length; ++l)
          for (std::int64_t c = 0; c < split.inner; ++c)
            gx[(a * split.length + l) * split.inner + c] += on->grad[a * split.inner + c];
    });
  }
  return out;
}

namespace {

// Shared forward for softmax / log_softmax; returns probabilities.
std::vector<float> softmax_values(std::span<const float> in, const AxisSplit& s) {
  std::vector<float> p(in.size());
  for (std::int64_t a = 0; a < s.outer; ++a) {
    for (std::int64_t c = 0; c < s.inner; ++c) {
      const auto base = a * s.length * s.inner + c;
      float m = -INFINITY;
      for (std::int64_t l = 0; l < s.length; ++l) m = std::max(m, in[base + l * s.inner]);
      double z = 0.0;
      for (std::int64_t l = 0; l < s.length; ++l) z += std::exp(static_cast<double>(in[base + l * s.inner] - m));
      for (std::int64_t l = 0; l < s.length; ++l) {
        p[base + l * s.inner] = static_cast<float>(std::exp(static_cast<double>(in[base + l * s.inner] - m)) / z);
      }
    }
  }
  return p;
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  detail::check_finite(x, "softmax");
  const auto split = split_axis(x.shape(), axis);
  Tensor out(x.shape(), softmax_values(x.data(), split));
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("softmax", [xn = x.handle(), on = out.handle(), split] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      const auto& y = on->data;
      const auto& gy = on->grad;
      for (std::int64_t a = 0; a < split.outer; ++a) {
        for (std::int64_t c = 0; c < split.inner; ++c) {
          const auto base = a * split.length * split.inner + c;
          double dot = 0.0;
          for (std::int64_t l = 0; l < split.length; ++l) dot += gy[base + l * split.inner] * y[base + l * split.inner];
          for (std::int64_t l = 0; l < split.length; ++l) {
            const auto i = base + l * split.inner;
            gx[i] += static_cast<float>(y[i] * (gy[i] - dot));
          }
        }
      }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  detail::check_finite(x, "log_softmax");
  const auto split = split_axis(x.shape(), axis);
  auto in = x.data();
  Tensor out(x.shape());
  auto o = out.mutable_data();
  for (std::int64_t a = 0; a < split.outer; ++a) {
    for (std::int64_t c = 0; c < split.inner; ++c) {
      const auto base = a * split.length * split.inner + c;
      float m = -INFINITY;
      for (std::int64_t l = 0; l < split.length; ++l) m = std::max(m, in[base + l * split.inner]);
      double z = 0.0;
      for (std::int64_t l = 0; l < split.length; ++l) z += std::exp(static_cast<double>(in[base + l * split.inner] - m));
      const double lz = std::log(z) + m;
      for (std::int64_t l = 0; l < split.length; ++l) {
        o[base + l * split.inner] = static_cast<float>(in[base + l * split.inner] - lz);
      }
    }
  }
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("log_softmax", [xn = x.handle(), on = out.handle(), split] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      const auto& y = on->data;
      const auto& gy = on->grad;
      for (std::int64_t a = 0; a < split.outer; ++a) {
        for (std::int64_t c = 0; c < split.inner; ++c) {
          const auto base = a * split.length * split.inner + c;
          double gsum = 0.0;
          for (std::int64_t l = 0; l < split.length; ++l) gsum += gy[base + l * split.inner];
          for (std::int64_t l = 0; l < split.length; ++l) {
            const auto i = base + l * split.inner;
            gx[i] += static_cast<float>(gy[i] - std::exp(static_cast<double>(y[i])) * gsum);
          }
        }
      }
    });
  }
  return out;
}

NormalizeResult l2_normalize(const Tensor& x, std::size_t axis) {
  detail::check_finite(x, "l2_normalize");
  const auto split = split_axis(x.shape(), axis);
  auto in = x.data();
  NormalizeResult result{Tensor(x.shape()), 0};
  auto o = result.value.mutable_data();
  std::vector<float> norms(static_cast<std::size_t>(split.outer * split.inner));
  for (std::int64_t a = 0; a < split.outer; ++a) {
    for (std::int64_t c = 0; c < split.inner; ++c) {
      const auto base = a * split.length * split.inner + c;
      double ss = 0.0;
      for (std::int64_t l = 0; l < split.length; ++l) {
        const double v = in[base + l * split.inner];
        ss += v * v;
      }
      const double n = std::sqrt(ss);
      norms[a * split.inner + c] = static_cast<float>(n);
      if (n == 0.0) {
        ++result.zero_vectors;
        continue;
      }
      for (std::int64_t l = 0; l < split.length; ++l) {
        o[base + l * split.inner] = static_cast<float>(in[base + l * split.inner] / n);
      }
    }
  }
  if (auto* tape = detail::recording_tape({&x})) {
    result.value.set_requires_grad(true);
    tape->record("l2_normalize", [xn = x.handle(), on = result.value.handle(), split, norms = std::move(norms)] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      const auto& y = on->data;
      const auto& gy = on->grad;
      for (std::int64_t a = 0; a < split.outer; ++a) {
        for (std::int64_t c = 0; c < split.inner; ++c) {
          const float n = norms[a * split.inner + c];
          if (n == 0.0f) continue;
          const auto base = a * split.length * split.inner + c;
          double dot = 0.0;
          for (std::int64_t l = 0; l < split.length; ++l) dot += gy[base + l * split.inner] * y[base + l * split.inner];
          for (std::int64_t l = 0; l < split.length; ++l) {
            const auto i = base + l * split.inner;
            gx[i] += static_cast<float>((gy[i] - y[i] * dot) / n);
          }
        }
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    fail(ErrorCode::kDimension, "cannot reshape " + shape_to_string(x.shape()) + " to " + shape_to_string(shape));
  }
  Tensor out(std::move(shape), std::vector<float>(x.data().begin(), x.data().end()));
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("reshape", [xn = x.handle(), on = out.handle()] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += on->grad[i];
    });
  }
  return out;
}

Tensor transpose2d(const Tensor& x) {
  if (x.rank() != 2) fail(ErrorCode::kDimension, "transpose2d expects a matrix");
  const auto rows = x.dim(0);
  const auto cols = x.dim(1);
  Tensor out({cols, rows});
  auto in = x.data();
  auto o = out.mutable_data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) o[c * rows + r] = in[r * cols + c];
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("transpose2d", [xn = x.handle(), on = out.handle(), rows, cols] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) gx[r * cols + c] += on->grad[c * rows + r];
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorCode::kUsage, "concat of nothing");
  Shape shape = parts.front().shape();
  if (shape.empty()) fail(ErrorCode::kDimension, "concat needs at least rank 1");
  std::int64_t lead = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      fail(ErrorCode::kDimension, "concat trailing shape mismatch: " + shape_to_string(s));
    }
    lead += s[0];
  }
  shape[0] = lead;
  std::vector<float> values;
  values.reserve(static_cast<std::size_t>(shape_numel(shape)));
  for (const auto& p : parts) values.insert(values.end(), p.data().begin(), p.data().end());
  Tensor out(shape, std::move(values));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  Tape* tape = any ? current_tape() : nullptr;
  if (tape) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<Node>> nodes;
    for (const auto& p : parts) nodes.push_back(p.handle());
    tape->record("concat", [nodes = std::move(nodes), on = out.handle()] {
      if (on->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& n : nodes) {
        if (n->requires_grad) {
          auto& g = n->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[offset + i];
        }
        offset += n->data.size();
      }
    });
  }
  return out;
}

Tensor narrow(const Tensor& x, std::int64_t start, std::int64_t length) {
  if (x.rank() == 0) fail(ErrorCode::kDimension, "narrow on scalar");
  if (start < 0 || length < 0 || start + length > x.dim(0)) fail(ErrorCode::kDimension, "narrow range out of bounds");
  const auto inner = x.numel() / std::max<std::int64_t>(x.dim(0), 1);
  Shape shape = x.shape();
  shape[0] = length;
  auto in = x.data();
  Tensor out(shape, std::vector<float>(in.begin() + start * inner, in.begin() + (start + length) * inner));
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("narrow", [xn = x.handle(), on = out.handle(), offset = start * inner] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) gx[offset + i] += on->grad[i];
    });
  }
  return out;
}

Tensor crop2d(const Tensor& x, std::int64_t height, std::int64_t width) {
  if (x.rank() != 3) fail(ErrorCode::kDimension, "crop2d expects [C,H,W]");
  const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (height > h || width > w || height < 0 || width < 0) fail(ErrorCode::kDimension, "crop larger than input");
  Tensor out({c, height, width});
  auto in = x.data();
  auto o = out.mutable_data();
  for (std::int64_t k = 0; k < c; ++k)
    for (std::int64_t y = 0; y < height; ++y)
      for (std::int64_t xx = 0; xx < width; ++xx) o[(k * height + y) * width + xx] = in[(k * h + y) * w + xx];
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("crop2d", [xn = x.handle(), on = out.handle(), c, h, w, height, width] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      for (std::int64_t k = 0; k < c; ++k)
        for (std::int64_t y = 0; y < height; ++y)
          for (std::int64_t xx = 0; xx < width; ++xx)
            gx[(k * h + y) * w + xx] += on->grad[(k * height + y) * width + xx];
    });
  }
  return out;
}

Tensor index_select(const Tensor& x, std::span<const std::int64_t> rows) {
  if (x.rank() == 0) fail(ErrorCode::kDimension, "index_select on scalar");
  const auto lead = x.dim(0);
  const auto inner = lead == 0 ? 0 : x.numel() / lead;
  Shape shape = x.shape();
  shape[0] = static_cast<std::int64_t>(rows.size());
  Tensor out(shape);
  auto in = x.data();
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= lead) fail(ErrorCode::kDimension, "index_select row out of range");
    std::copy_n(in.begin() + rows[r] * inner, inner, o.begin() + static_cast<std::int64_t>(r) * inner);
  }
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("index_select",
                 [xn = x.handle(), on = out.handle(), idx = std::vector<std::int64_t>(rows.begin(), rows.end()), inner] {
                   if (on->grad.empty()) return;
                   auto& gx = xn->ensure_grad();
                   for (std::size_t r = 0; r < idx.size(); ++r)
                     for (std::int64_t k = 0; k < inner; ++k)
                       gx[idx[r] * inner + k] += on->grad[static_cast<std::int64_t>(r) * inner + k];
                 });
  }
  return out;
}

Tensor take(const Tensor& x, std::span<const std::int64_t> flat_indices) {
  Tensor out({static_cast<std::int64_t>(flat_indices.size())});
  auto in = x.data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] < 0 || flat_indices[i] >= x.numel()) fail(ErrorCode::kDimension, "take index out of range");
    o[i] = in[flat_indices[i]];
  }
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record("take", [xn = x.handle(), on = out.handle(),
                          idx = std::vector<std::int64_t>(flat_indices.begin(), flat_indices.end())] {
      if (on->grad.empty()) return;
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += on->grad[i];
    });
  }
  return out;
}

}  // namespace hykey
