#ifndef HCMARL_OPS_HPP_
#define HCMARL_OPS_HPP_

#include <span>
#include <vector>

#include "hcmarl/tensor.hpp"

namespace hcmarl {

// Probability floor applied inside cross_entropy_soft: log p is clamped to
// log(kProbabilityFloor) so a zero prediction at a supported target category
// costs a large finite amount instead of infinity.
inline constexpr double kProbabilityFloor = 1e-12;

// ---- Eigen kernels (no tape) ------------------------------------------------

// Row-wise softmax of logits / temperature, max-shifted.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(
    const Eigen::MatrixBase<Derived>& logits, typename Derived::Scalar temperature) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const Scalar mx = logits.row(r).maxCoeff();
    out.row(r) = ((logits.row(r).array() - mx) / temperature).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename Derived>
MatrixX<typename Derived::Scalar> log_softmax_rows(
    const Eigen::MatrixBase<Derived>& logits, typename Derived::Scalar temperature) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const Scalar mx = logits.row(r).maxCoeff();
    auto shifted = ((logits.row(r).array() - mx) / temperature).eval();
    out.row(r) = shifted - std::log(shifted.exp().sum());
  }
  return out;
}

// Index of the largest entry; ties go to the smallest index.
template <typename Derived>
Index argmax_first(const Eigen::DenseBase<Derived>& row) {
  Index best = 0;
  for (Index i = 1; i < row.size(); ++i) {
    if (row(i) > row(best)) best = i;
  }
  return best;
}

// ---- Differentiable operations ---------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // element-wise
// a [n x m] + bias [1 x m] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
// a [n x m] * column [n x 1] broadcast over columns.
Tensor mul_col(const Tensor& a, const Tensor& column);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);

Tensor minimum(const Tensor& a, const Tensor& b);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum(const Tensor& a);   // -> 1x1
Tensor mean(const Tensor& a);  // -> 1x1
Tensor sum_cols(const Tensor& a);   // [n x m] -> [n x 1]
Tensor mean_rows(const Tensor& a);  // [n x m] -> [1 x m]

Tensor transpose(const Tensor& a);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
// Rows of `table` selected by index (embedding lookup, gather).
Tensor gather_rows(const Tensor& table, std::span<const Index> rows);
// out(i, 0) = a(i, cols[i]).
Tensor pick(const Tensor& a, std::span<const Index> cols);

Tensor softmax(const Tensor& logits, double temperature = 1.0);
Tensor log_softmax(const Tensor& logits, double temperature = 1.0);

// -sum_rows sum_c target_c * max(log_pred_c, log(kProbabilityFloor)).
// Targets are treated as constants; gradient reaches only the predictions.
Tensor cross_entropy_soft(const Matrix& target_probs,
                          const Tensor& pred_log_probs);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace hcmarl

#endif  // HCMARL_OPS_HPP_
