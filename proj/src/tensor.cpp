#include "hcmarl/tensor.hpp"

#include <unordered_set>

namespace hcmarl {

namespace {
thread_local bool g_no_grad = false;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::enabled() { return g_no_grad; }

void detail::Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  grad += g;
}

Tensor::Tensor() : Tensor(Matrix(0, 0)) {}

Tensor::Tensor(Matrix value, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  if (requires_grad) {
    node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
  }
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m), requires_grad);
}

Tensor Tensor::row(const RowVector& v, bool requires_grad) {
  return Tensor(Matrix(v), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() needs a 1x1 tensor, got " +
                     std::to_string(rows()) + "x" + std::to_string(cols()));
  }
  return node_->value(0, 0);
}

Matrix Tensor::grad() const {
  if (node_->grad.rows() == rows() && node_->grad.cols() == cols()) {
    return node_->grad;
  }
  return Matrix::Zero(rows(), cols());
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.setZero(rows(), cols());
  node_->grad_ready = false;
}

Tensor Tensor::detach() const { return Tensor(node_->value, false); }

Tensor Tensor::clone() const {
  return Tensor(node_->value, node_->requires_grad && node_->leaf);
}

Tensor Tensor::make_result(Matrix value, std::vector<Tensor> parents,
                           std::function<void(const Matrix&)> backward) {
  Tensor out(std::move(value), false);
  out.node_->leaf = false;
  if (g_no_grad) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward = std::move(backward);
  return out;
}

void backward(const Tensor& loss) {
  const auto& root = loss.node();
  if (loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     std::to_string(loss.rows()) + "x" +
                     std::to_string(loss.cols()));
  }
  if (root->consumed) {
    throw TapeError("backward() already ran on this loss; the tape is freed");
  }
  if (!root->requires_grad) {
    root->consumed = true;
    return;
  }

  // Iterative post-order DFS for a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->released) {
      throw TapeError(
          "backward() reached a tape segment freed by an earlier pass");
    }
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->leaf) {
      node->grad_ready = true;
      continue;
    }
    if (node->backward) {
      if (node->grad.rows() != node->value.rows() ||
          node->grad.cols() != node->value.cols()) {
        node->grad = Matrix::Zero(node->value.rows(), node->value.cols());
      }
      node->backward(node->grad);
    }
  }

  for (detail::Node* node : order) {
    if (node->leaf) continue;
    node->backward = nullptr;
    node->parents.clear();
    node->grad.resize(0, 0);
    node->released = true;
  }
  root->consumed = true;
}

Tensor& ParameterSet::add(const std::string& name, Matrix value) {
  auto [it, inserted] = params_.emplace(name, Tensor(std::move(value), true));
  if (!inserted) {
    throw std::invalid_argument("duplicate parameter name '" + name + "'");
  }
  return it->second;
}

bool ParameterSet::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter '" + name + "'");
  }
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter '" + name + "'");
  }
  return it->second;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

Index ParameterSet::element_count() const {
  Index n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& [name, t] : params_) out.add(name, t.value());
  return out;
}

bool ParameterSet::congruent(const ParameterSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (a->second.rows() != b->second.rows() ||
        a->second.cols() != b->second.cols()) {
      return false;
    }
  }
  return true;
}

bool ParameterSet::equals(const ParameterSet& other) const {
  if (!congruent(other)) return false;
  auto b = other.params_.begin();
  for (auto a = params_.begin(); a != params_.end(); ++a, ++b) {
    if (a->second.value() != b->second.value()) return false;
  }
  return true;
}

}  // namespace hcmarl
