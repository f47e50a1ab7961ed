#include "hcmarl/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hcmarl {

void adam_step(AdamState& state, ParameterSet& params) {
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) {
      throw std::invalid_argument("adam_step: parameter '" + name +
                                  "' has no gradient");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, p] : params) {
    const Matrix g = p.grad();
    auto& mom = state.moments[name];
    if (mom.first.rows() != g.rows() || mom.first.cols() != g.cols()) {
      mom.first = Matrix::Zero(g.rows(), g.cols());
      mom.second = Matrix::Zero(g.rows(), g.cols());
    }
    mom.first = state.beta1 * mom.first + (1.0 - state.beta1) * g;
    mom.second =
        state.beta2 * mom.second + (1.0 - state.beta2) * g.cwiseProduct(g);
    Matrix update = (mom.first.array() / c1) /
                    ((mom.second.array() / c2).sqrt() + state.eps);
    p.mutable_value() -= state.lr * update;
    p.zero_grad();
  }
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, p] : params) sq += p.grad().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, p] : params) {
      if (p.requires_grad()) p.node()->grad *= s;
    }
  }
  return norm;
}

void ema_blend(ParameterSet& teacher, const ParameterSet& student,
               double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw std::invalid_argument("ema_blend: momentum must lie in [0, 1]");
  }
  if (!teacher.congruent(student)) {
    throw std::invalid_argument(
        "ema_blend: teacher and student parameter sets differ in names or "
        "shapes");
  }
  if (momentum == 1.0) return;
  auto s = student.begin();
  for (auto t = teacher.begin(); t != teacher.end(); ++t, ++s) {
    Matrix& tv = t->second.mutable_value();
    if (momentum == 0.0) {
      tv = s->second.value();
    } else {
      // Written as an increment so a teacher equal to its student stays
      // bitwise unchanged.
      tv += (1.0 - momentum) * (s->second.value() - tv);
    }
  }
}

}  // namespace hcmarl
