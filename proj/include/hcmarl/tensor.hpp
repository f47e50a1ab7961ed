#ifndef HCMARL_TENSOR_HPP_
#define HCMARL_TENSOR_HPP_

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcmarl {

// Row-major dense storage shared by every numeric module.
template <typename Scalar>
using MatrixX =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // allocated lazily for non-leaf nodes
  bool requires_grad = false;
  bool leaf = true;
  bool grad_ready = false;  // leaf grad populated by a backward pass
  bool consumed = false;    // this node was the root of a finished backward
  bool released = false;    // interior node whose tape segment was freed
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Matrix&)> backward;

  void accumulate(const Matrix& g);
};

}  // namespace detail

// Scoped switch that stops operations from recording onto the tape.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool enabled();

 private:
  bool previous_;
};

// A rank-2 array of doubles that optionally participates in reverse-mode
// differentiation. Copies share the underlying node; use clone() for a deep
// copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor row(const RowVector& v, bool requires_grad = false);

  const Matrix& value() const { return node_->value; }
  // Mutable access is intended for leaves (parameters, inputs).
  Matrix& mutable_value() { return node_->value; }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }
  Index size() const { return node_->value.size(); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }

  // Gradient buffer; zeros of the value's shape when nothing has flowed in.
  Matrix grad() const;
  bool has_grad() const { return node_->grad_ready; }
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;

  // Identity of the underlying node (copies of a Tensor compare equal).
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  // Builds a non-leaf result. The backward closure receives d(loss)/d(out)
  // and is only kept when gradient recording is active.
  static Tensor make_result(Matrix value, std::vector<Tensor> parents,
                            std::function<void(const Matrix&)> backward);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse pass from a 1x1 loss. Leaves reached from the loss get their grads
// accumulated; the interior of the tape is released afterwards, so a second
// call on the same loss throws TapeError.
void backward(const Tensor& loss);

// Named parameters with deterministic (sorted) iteration order.
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor>;

  Tensor& add(const std::string& name, Matrix value);
  bool contains(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  bool empty() const { return params_.empty(); }
  Index element_count() const;

  void zero_grad();
  // Deep copy with fresh leaves.
  ParameterSet clone() const;
  // Same names and shapes.
  bool congruent(const ParameterSet& other) const;
  // Element-wise equality of every value.
  bool equals(const ParameterSet& other) const;

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

 private:
  Map params_;
};

}  // namespace hcmarl

#endif  // HCMARL_TENSOR_HPP_
