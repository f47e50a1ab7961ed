#ifndef HCMARL_CONSENSUS_HPP_
#define HCMARL_CONSENSUS_HPP_

#include <vector>

#include "hcmarl/nn.hpp"
#include "hcmarl/rng.hpp"
#include "hcmarl/tensor.hpp"

namespace hcmarl {

struct ConsensusConfig {
  int categories = 4;  // K
  double student_temperature = 0.1;
  double teacher_temperature = 0.04;
  double ema_momentum = 0.99;
  double center_momentum = 0.9;
  std::vector<int> encoder_widths = {64, 64};
  int input_dim = 1;
  double learning_rate = 1e-3;
  // Keep the i == j terms of the pairwise sum.
  bool include_self_pairs = true;

  // Throws std::invalid_argument (K >= 1, positive temperatures with the
  // teacher no softer than the student, momenta in [0, 1], ...).
  void validate() const;
  MlpSpec encoder_spec() const;
};

// Student/teacher copies of a relu encoder with a linear K-way output, plus
// the running center subtracted from teacher logits.
struct ConsensusHead {
  MlpSpec spec;
  ParameterSet student;
  ParameterSet teacher;
  RowVector center;

  static ConsensusHead create(const ConsensusConfig& cfg, Rng& rng);
};

struct ConsensusCategory {
  int index = 0;
  friend bool operator==(ConsensusCategory, ConsensusCategory) = default;
};

Tensor student_logits(const ConsensusHead& head, const Tensor& x);
// softmax(student_logits / tau_s), recorded on the tape.
Tensor student_distribution(const ConsensusHead& head, const Tensor& x,
                            const ConsensusConfig& cfg);

Matrix teacher_logits(const ConsensusHead& head, const Matrix& x);
// softmax((teacher_logits - center) / tau_t); never on the tape.
Matrix teacher_distribution(const ConsensusHead& head, const Matrix& x,
                            const ConsensusConfig& cfg);
Matrix teacher_distribution_from_logits(const ConsensusHead& head,
                                        const Matrix& logits,
                                        const ConsensusConfig& cfg);

// Pairwise self-distillation loss over the agents of one timestep:
//   sum_i sum_j CE(P_T(x_j), P_S(x_i))
// Rows of `inputs` are the agents. Throws on an empty batch.
Tensor consensus_loss(const ConsensusHead& head, const Tensor& inputs,
                      const ConsensusConfig& cfg);

// Same loss for a stack of groups of `group_size` consecutive rows (one group
// per timestep), averaged over groups. When `teacher_logits_out` is non-null
// it receives the raw teacher logits of every row.
Tensor consensus_loss_grouped(const ConsensusHead& head, const Matrix& inputs,
                              int group_size, const ConsensusConfig& cfg,
                              Matrix* teacher_logits_out = nullptr);

// Argmax of the student distribution; ties go to the smallest index.
ConsensusCategory consensus_category(const ConsensusHead& head,
                                     const RowVector& x,
                                     const ConsensusConfig& cfg);
std::vector<int> consensus_categories(const ConsensusHead& head,
                                      const Matrix& x,
                                      const ConsensusConfig& cfg);

// teacher <- EMA(teacher, student); center <- m * center + (1 - m) *
// column-mean(batch_teacher_logits).
void update_teacher(ConsensusHead& head, const ConsensusConfig& cfg,
                    const Matrix& batch_teacher_logits);

// Fraction of ordered pairs (i != j) inside each group that share a category,
// pooled over groups. Groups of one agent count as full agreement.
double agreement_rate(const std::vector<int>& categories, int group_size);

// Shannon entropy (nats) of the empirical category histogram.
double category_entropy(const std::vector<int>& categories, int k);

}  // namespace hcmarl

#endif  // HCMARL_CONSENSUS_HPP_
