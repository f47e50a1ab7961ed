#include "hcmarl/consensus.hpp"

#include <cmath>
#include <stdexcept>

#include "hcmarl/optim.hpp"

namespace hcmarl {

void ConsensusConfig::validate() const {
  if (categories < 1) {
    throw std::invalid_argument("consensus: category count K must be >= 1");
  }
  if (!(student_temperature > 0.0) || !(teacher_temperature > 0.0)) {
    throw std::invalid_argument("consensus: temperatures must be positive");
  }
  if (teacher_temperature > student_temperature) {
    throw std::invalid_argument(
        "consensus: teacher temperature must not exceed the student's");
  }
  if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) {
    throw std::invalid_argument("consensus: ema momentum must lie in [0, 1]");
  }
  if (!(center_momentum >= 0.0 && center_momentum <= 1.0)) {
    throw std::invalid_argument(
        "consensus: center momentum must lie in [0, 1]");
  }
  if (input_dim < 1) {
    throw std::invalid_argument("consensus: input_dim must be positive");
  }
  for (int w : encoder_widths) {
    if (w < 1) throw std::invalid_argument("consensus: encoder widths must be positive");
  }
  if (!(learning_rate >= 0.0)) {
    throw std::invalid_argument("consensus: learning rate must be >= 0");
  }
}

MlpSpec ConsensusConfig::encoder_spec() const {
  MlpSpec spec;
  spec.sizes.push_back(input_dim);
  for (int w : encoder_widths) spec.sizes.push_back(w);
  spec.sizes.push_back(categories);
  spec.hidden = Activation::kRelu;
  return spec;
}

ConsensusHead ConsensusHead::create(const ConsensusConfig& cfg, Rng& rng) {
  cfg.validate();
  ConsensusHead head;
  head.spec = cfg.encoder_spec();
  init_mlp(head.student, head.spec, rng);
  head.teacher = head.student.clone();
  head.center = RowVector::Zero(cfg.categories);
  return head;
}

namespace {

void check_width(const ConsensusHead& head, Index cols) {
  if (cols != head.spec.input_dim()) {
    throw ShapeError("consensus head expects input width " +
                     std::to_string(head.spec.input_dim()) + ", got " +
                     std::to_string(cols));
  }
}

}  // namespace

Tensor student_logits(const ConsensusHead& head, const Tensor& x) {
  check_width(head, x.cols());
  return mlp_forward(head.student, x, head.spec);
}

Tensor student_distribution(const ConsensusHead& head, const Tensor& x,
                            const ConsensusConfig& cfg) {
  return softmax(student_logits(head, x), cfg.student_temperature);
}

Matrix teacher_logits(const ConsensusHead& head, const Matrix& x) {
  check_width(head, x.cols());
  NoGradGuard no_grad;
  return mlp_forward(head.teacher, Tensor(x), head.spec).value();
}

Matrix teacher_distribution_from_logits(const ConsensusHead& head,
                                        const Matrix& logits,
                                        const ConsensusConfig& cfg) {
  Matrix centered = logits.rowwise() - head.center;
  return softmax_rows(centered, cfg.teacher_temperature);
}

Matrix teacher_distribution(const ConsensusHead& head, const Matrix& x,
                            const ConsensusConfig& cfg) {
  return teacher_distribution_from_logits(head, teacher_logits(head, x), cfg);
}

Tensor consensus_loss_grouped(const ConsensusHead& head, const Matrix& inputs,
                              int group_size, const ConsensusConfig& cfg,
                              Matrix* teacher_logits_out) {
  if (inputs.rows() == 0) {
    throw std::invalid_argument("consensus_loss: empty batch");
  }
  if (group_size < 1 || inputs.rows() % group_size != 0) {
    throw std::invalid_argument(
        "consensus_loss: batch rows are not a whole number of agent groups");
  }
  const Matrix t_logits = teacher_logits(head, inputs);
  const Matrix t_probs = teacher_distribution_from_logits(head, t_logits, cfg);
  if (teacher_logits_out != nullptr) *teacher_logits_out = t_logits;

  // sum_j CE(P_T(x_j), P_S(x_i)) = CE(sum_j P_T(x_j), P_S(x_i)), so each
  // student row is scored against its group's summed teacher distribution.
  const Index groups = inputs.rows() / group_size;
  Matrix targets(inputs.rows(), t_probs.cols());
  for (Index g = 0; g < groups; ++g) {
    const RowVector total =
        t_probs.middleRows(g * group_size, group_size).colwise().sum();
    for (Index r = 0; r < group_size; ++r) {
      const Index row = g * group_size + r;
      targets.row(row) = total;
      if (!cfg.include_self_pairs) targets.row(row) -= t_probs.row(row);
    }
  }
  Tensor log_p = log_softmax(student_logits(head, Tensor(inputs)),
                             cfg.student_temperature);
  return scale(cross_entropy_soft(targets, log_p),
               1.0 / static_cast<double>(groups));
}

Tensor consensus_loss(const ConsensusHead& head, const Tensor& inputs,
                      const ConsensusConfig& cfg) {
  return consensus_loss_grouped(head, inputs.value(),
                                static_cast<int>(inputs.rows()), cfg);
}

ConsensusCategory consensus_category(const ConsensusHead& head,
                                     const RowVector& x,
                                     const ConsensusConfig& cfg) {
  return {consensus_categories(head, Matrix(x), cfg).front()};
}

std::vector<int> consensus_categories(const ConsensusHead& head,
                                      const Matrix& x,
                                      const ConsensusConfig& cfg) {
  NoGradGuard no_grad;
  const Matrix probs = student_distribution(head, Tensor(x), cfg).value();
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Index r = 0; r < probs.rows(); ++r) {
    out[r] = static_cast<int>(argmax_first(probs.row(r)));
  }
  return out;
}

void update_teacher(ConsensusHead& head, const ConsensusConfig& cfg,
                    const Matrix& batch_teacher_logits) {
  ema_blend(head.teacher, head.student, cfg.ema_momentum);
  if (batch_teacher_logits.rows() == 0 || cfg.center_momentum == 1.0) return;
  if (batch_teacher_logits.cols() != head.center.cols()) {
    throw ShapeError("update_teacher: logits width does not match K");
  }
  const RowVector batch_mean = batch_teacher_logits.colwise().mean();
  head.center = cfg.center_momentum * head.center +
                (1.0 - cfg.center_momentum) * batch_mean;
}

double agreement_rate(const std::vector<int>& categories, int group_size) {
  if (group_size < 1 || categories.size() % group_size != 0) {
    throw std::invalid_argument("agreement_rate: ragged groups");
  }
  if (categories.empty()) return 1.0;
  if (group_size == 1) return 1.0;
  std::size_t match = 0;
  std::size_t total = 0;
  for (std::size_t g = 0; g < categories.size(); g += group_size) {
    for (int i = 0; i < group_size; ++i) {
      for (int j = 0; j < group_size; ++j) {
        if (i == j) continue;
        ++total;
        if (categories[g + i] == categories[g + j]) ++match;
      }
    }
  }
  return static_cast<double>(match) / static_cast<double>(total);
}

double category_entropy(const std::vector<int>& categories, int k) {
  if (categories.empty()) return 0.0;
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (int c : categories) counts.at(static_cast<std::size_t>(c)) += 1.0;
  double h = 0.0;
  for (double c : counts) {
    if (c <= 0.0) continue;
    const double p = c / static_cast<double>(categories.size());
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace hcmarl
