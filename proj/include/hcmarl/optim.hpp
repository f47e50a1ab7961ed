#ifndef HCMARL_OPTIM_HPP_
#define HCMARL_OPTIM_HPP_

#include <cstdint>
#include <map>
#include <string>

#include "hcmarl/tensor.hpp"

namespace hcmarl {

struct AdamMoments {
  Matrix first;
  Matrix second;
};

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, AdamMoments> moments;

  AdamState() = default;
  explicit AdamState(double learning_rate) : lr(learning_rate) {}
};

// One bias-corrected Adam update of every parameter, then clears the grads.
// Throws std::invalid_argument naming the first parameter whose gradient was
// not populated by a backward pass.
void adam_step(AdamState& state, ParameterSet& params);

// Rescales all grads so their joint L2 norm is at most max_norm. Returns the
// norm before scaling.
double clip_grad_norm(ParameterSet& params, double max_norm);

// teacher <- momentum * teacher + (1 - momentum) * student, element-wise.
// momentum 1 leaves the teacher untouched and momentum 0 copies the student
// exactly. Throws on name or shape mismatch.
void ema_blend(ParameterSet& teacher, const ParameterSet& student,
               double momentum);

}  // namespace hcmarl

#endif  // HCMARL_OPTIM_HPP_
