#include "hykey/tensor.hpp"

#include <cmath>
#include <sstream>

#include "hykey/error.hpp"

namespace hykey {

namespace {
thread_local Tape* g_current_tape = nullptr;
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) fail(ErrorCode::kDimension, "negative extent in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : node_(std::make_shared<detail::TensorNode>()) {
  const auto n = shape_numel(shape);
  node_->shape = std::move(shape);
  node_->data.assign(static_cast<std::size_t>(n), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : node_(std::make_shared<detail::TensorNode>()) {
  const auto n = shape_numel(shape);
  if (static_cast<std::int64_t>(values.size()) != n) {
    fail(ErrorCode::kDimension, "value count " + std::to_string(values.size()) + " does not match shape " +
                                    shape_to_string(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

Tensor Tensor::scalar(float value) { return Tensor(Shape{}, std::vector<float>{value}); }

const Shape& Tensor::shape() const {
  if (!node_) fail(ErrorCode::kUsage, "access to undefined tensor");
  return node_->shape;
}

std::int64_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) fail(ErrorCode::kDimension, "axis out of range for shape " + shape_to_string(s));
  return s[axis];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(node_ ? node_->data.size() : 0); }

std::span<const float> Tensor::data() const {
  if (!node_) return {};
  return node_->data;
}

std::span<float> Tensor::mutable_data() {
  if (!node_) return {};
  return node_->data;
}

float Tensor::item() const {
  if (numel() != 1) fail(ErrorCode::kUsage, "item() on tensor of shape " + shape_to_string(shape()));
  return node_->data[0];
}

float Tensor::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) fail(ErrorCode::kDimension, "index rank mismatch");
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= s[axis]) fail(ErrorCode::kDimension, "index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->data[static_cast<std::size_t>(flat)];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  if (!node_) fail(ErrorCode::kUsage, "set_requires_grad on undefined tensor");
  node_->requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::clone() const {
  Tensor out(shape(), node_->data);
  out.node_->requires_grad = node_->requires_grad;
  out.node_->grad = node_->grad;
  return out;
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data); }

void Tape::record(const char* op_name, BackwardFn fn) {
  if (replayed_) fail(ErrorCode::kUsage, "recording onto a tape that was already replayed");
  entries_.push_back(Entry{op_name, std::move(fn)});
}

void Tape::backward(const Tensor& output) {
  if (!output.defined() || output.numel() != 1) {
    fail(ErrorCode::kUsage, "backward requires a scalar output");
  }
  if (replayed_) fail(ErrorCode::kUsage, "tape already replayed");
  replayed_ = true;
  if (!output.requires_grad()) return;
  auto& g = output.node()->ensure_grad();
  g[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
}

void Tape::clear() {
  entries_.clear();
  replayed_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }

TapeScope::~TapeScope() { g_current_tape = previous_; }

Tape* current_tape() { return g_current_tape; }

namespace detail {

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  if (g_current_tape == nullptr) return nullptr;
  for (const auto* t : inputs) {
    if (t != nullptr && t->requires_grad()) return g_current_tape;
  }
  return nullptr;
}

void check_finite(const Tensor& t, const char* op_name) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, std::string("non-finite input to ") + op_name);
  }
}

}  // namespace detail

}  // namespace hykey
