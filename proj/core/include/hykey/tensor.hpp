#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hykey {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;

  std::vector<float>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
    return grad;
  }
};

}  // namespace detail

// Dense row-major float32 tensor. Copies share storage (handle semantics, like
// most autodiff frameworks); use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t dim(std::size_t axis) const;
  std::int64_t numel() const;

  std::span<const float> data() const;
  std::span<float> mutable_data();
  float item() const;
  float at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const float> grad() const;
  void zero_grad();

  Tensor clone() const;
  Tensor detach() const;

  detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& handle() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Ordered record of differentiable operations. backward() replays the
// recorded closures once, newest first. A tape belongs to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(const char* op_name, BackwardFn fn);
  void backward(const Tensor& output);

  std::size_t size() const { return entries_.size(); }
  const char* op_name(std::size_t i) const { return entries_[i].name; }
  bool replayed() const { return replayed_; }
  void clear();

 private:
  struct Entry {
    const char* name;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool replayed_ = false;
};

// Installs a tape as the calling thread's recording target for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* current_tape();

namespace detail {

// Returns the active tape when any input participates in differentiation.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);

void check_finite(const Tensor& t, const char* op_name);

}  // namespace detail

}  // namespace hykey
