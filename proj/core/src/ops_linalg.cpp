#include <Eigen/Core>

#include "hykey/error.hpp"
#include "hykey/ops.hpp"

namespace hykey {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) fail(ErrorCode::kDimension, std::string(what) + " expects a matrix, got " + shape_to_string(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) fail(ErrorCode::kDimension, "matmul inner dimension mismatch");
  Tensor out({n, m});
  Map(out.mutable_data().data(), n, m).noalias() = MapC(a.data().data(), n, k) * MapC(b.data().data(), k, m);
  if (auto* tape = detail::recording_tape({&a, &b})) {
    out.set_requires_grad(true);
    tape->record("matmul", [an = a.handle(), bn = b.handle(), on = out.handle(), n, k, m] {
      if (on->grad.empty()) return;
      MapC g(on->grad.data(), n, m);
      if (an->requires_grad) Map(an->ensure_grad().data(), n, k).noalias() += g * MapC(bn->data.data(), k, m).transpose();
      if (bn->requires_grad) Map(bn->ensure_grad().data(), k, m).noalias() += MapC(an->data.data(), n, k).transpose() * g;
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const auto n = a.dim(0), k = a.dim(1), m = b.dim(0);
  if (b.dim(1) != k) fail(ErrorCode::kDimension, "matmul_nt inner dimension mismatch");
  Tensor out({n, m});
  Map(out.mutable_data().data(), n, m).noalias() =
      MapC(a.data().data(), n, k) * MapC(b.data().data(), m, k).transpose();
  if (auto* tape = detail::recording_tape({&a, &b})) {
    out.set_requires_grad(true);
    tape->record("matmul_nt", [an = a.handle(), bn = b.handle(), on = out.handle(), n, k, m] {
      if (on->grad.empty()) return;
      MapC g(on->grad.data(), n, m);
      if (an->requires_grad) Map(an->ensure_grad().data(), n, k).noalias() += g * MapC(bn->data.data(), m, k);
      if (bn->requires_grad) Map(bn->ensure_grad().data(), m, k).noalias() += g.transpose() * MapC(an->data.data(), n, k);
    });
  }
  return out;
}

}  // namespace hykey
