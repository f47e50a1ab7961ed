#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hcmarl/consensus.hpp"
#include "hcmarl/optim.hpp"
#include "consensus_oracle.hpp"
#include "synthetic_views.hpp"
#include "test_support.hpp"

namespace hcmarl {
namespace {

using testing::naive_matmul;
using testing::naive_softmax;
using testing::random_matrix;
using testing::brute_force_pairwise_loss;

ConsensusConfig linear_cfg(int input_dim, int k, double tau_s = 1.0,
                           double tau_t = 1.0) {
  ConsensusConfig cfg;
  cfg.input_dim = input_dim;
  cfg.categories = k;
  cfg.encoder_widths = {};
  cfg.student_temperature = tau_s;
  cfg.teacher_temperature = tau_t;
  return cfg;
}

// Head whose student and teacher are the single linear layer (w, b).
ConsensusHead linear_head(const ConsensusConfig& cfg, const Matrix& w,
                          const Matrix& b) {
  Rng rng(0);
  ConsensusHead head = ConsensusHead::create(cfg, rng);
  head.student.at("l0.w").mutable_value() = w;
  head.student.at("l0.b").mutable_value() = b;
  head.teacher = head.student.clone();
  return head;
}

TEST(ConsensusConfig, ValidatesRanges) {
  ConsensusConfig cfg;
  cfg.input_dim = 3;
  EXPECT_NO_THROW(cfg.validate());
  cfg.categories = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.categories = 4;
  cfg.teacher_temperature = 0.2;  // softer than the student's 0.1
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.teacher_temperature = 0.04;
  cfg.ema_momentum = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(StudentDistribution, SingleCategoryIsCertain) {
  ConsensusConfig cfg;
  cfg.input_dim = 5;
  cfg.categories = 1;
  Rng rng(1);
  auto head = ConsensusHead::create(cfg, rng);
  Matrix p = student_distribution(head, Tensor(random_matrix(6, 5, 2)), cfg).value();
  EXPECT_TRUE((p.array() == 1.0).all());
}

TEST(StudentDistribution, IdenticalRowsGiveIdenticalOutputs) {
  ConsensusConfig cfg;
  cfg.input_dim = 4;
  Rng rng(2);
  auto head = ConsensusHead::create(cfg, rng);
  Matrix x = random_matrix(1, 4, 3).replicate(3, 1);
  Matrix p = student_distribution(head, Tensor(x), cfg).value();
  EXPECT_EQ(p.row(0), p.row(1));
  EXPECT_EQ(p.row(0), p.row(2));
}

TEST(StudentDistribution, HandSetLinearEncoderMatchesOracle) {
  auto cfg = linear_cfg(2, 2);
  Matrix w(2, 2), b(1, 2);
  w << 0.4, -1.1, 2.0, 0.3;
  b << 0.25, -0.5;
  auto head = linear_head(cfg, w, b);
  Matrix x(1, 2);
  x << 1.0, 0.0;
  // logits = (0.4 + 0.25, -1.1 - 0.5)
  auto expected = naive_softmax({0.65, -1.6}, 1.0);
  Matrix p = student_distribution(head, Tensor(x), cfg).value();
  EXPECT_NEAR(p(0, 0), expected[0], 1e-15);
  EXPECT_NEAR(p(0, 1), expected[1], 1e-15);
}

TEST(TeacherDistribution, CenterEqualToLogitsGivesUniform) {
  auto cfg = linear_cfg(3, 4, 0.1, 0.04);
  Rng rng(5);
  auto head = ConsensusHead::create(cfg, rng);
  Matrix x = random_matrix(1, 3, 6);
  head.center = teacher_logits(head, x).row(0);
  Matrix p = teacher_distribution(head, x, cfg);
  for (Index k = 0; k < 4; ++k) EXPECT_NEAR(p(0, k), 0.25, 1e-15);
}

TEST(TeacherDistribution, SharpeningConcentratesOnArgmax) {
  auto cfg = linear_cfg(2, 3, 1.0, 1.0);
  Matrix w(2, 3), b(1, 3);
  w << 0.1, 0.5, 0.2, 0.0, 0.0, 0.0;
  b.setZero();
  auto head = linear_head(cfg, w, b);
  Matrix x(1, 2);
  x << 1.0, 0.0;
  double prev = 0.0;
  for (double tau : {1.0, 0.1, 0.01, 0.001}) {
    cfg.teacher_temperature = tau;
    Matrix p = teacher_distribution(head, x, cfg);
    EXPECT_EQ(argmax_first(p.row(0)), 1);
    EXPECT_GT(p(0, 1), prev);
    prev = p(0, 1);
  }
  EXPECT_GT(prev, 0.999);
}

TEST(TeacherDistribution, HandSetCenterMatchesOracle) {
  auto cfg = linear_cfg(2, 3, 0.5, 0.25);
  Matrix w(2, 3), b(1, 3);
  w << 1.0, -0.5, 0.2, 0.3, 0.9, -1.0;
  b << 0.0, 0.1, 0.2;
  auto head = linear_head(cfg, w, b);
  head.center = RowVector(3);
  head.center << 0.3, -0.2, 0.05;
  Matrix x(1, 2);
  x << 0.5, 2.0;
  // logits = x w + b = (0.5 + 0.6, -0.25 + 1.8 + 0.1, 0.1 - 2 + 0.2)
  std::vector<double> centered = {1.1 - 0.3, 1.65 + 0.2, -1.7 - 0.05};
  auto expected = naive_softmax(centered, 0.25);
  Matrix p = teacher_distribution(head, x, cfg);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p(0, k), expected[k], 1e-14);
}

TEST(ConsensusLoss, PerfectSelfDistillationIsZero) {
  auto cfg = linear_cfg(1, 2, 0.1, 0.04);
  Matrix w(1, 2), b(1, 2);
  w << 0.0, 0.0;
  b << 1000.0, 0.0;
  auto head = linear_head(cfg, w, b);
  Tensor loss = consensus_loss(head, Tensor(Matrix::Ones(1, 1)), cfg);
  EXPECT_NEAR(loss.item(), 0.0, 1e-12);
}

TEST(ConsensusLoss, TwoAgentHandSetMatchesDoubleSum) {
  auto cfg = linear_cfg(2, 2, 1.0, 0.5);
  Matrix w(2, 2), b(1, 2);
  w << 0.7, -0.2, -0.4, 1.3;
  b << 0.1, 0.0;
  auto head = linear_head(cfg, w, b);
  head.teacher.at("l0.w").mutable_value() << 0.5, 0.1, 0.2, 0.9;
  head.center = RowVector(2);
  head.center << 0.05, -0.1;
  Matrix x(2, 2);
  x << 1.0, 0.0, 0.3, -0.8;
  const double expected = brute_force_pairwise_loss(head, cfg, x);
  EXPECT_NEAR(consensus_loss(head, Tensor(x), cfg).item(), expected, 1e-12);
}

TEST(ConsensusLoss, RandomInstancesMatchDoubleSum) {
  for (int seed = 0; seed < 10; ++seed) {
    ConsensusConfig cfg;
    cfg.input_dim = 3;
    cfg.categories = 2 + seed % 4;
    cfg.encoder_widths = {5};
    cfg.include_self_pairs = seed % 3 != 0;
    Rng rng(seed);
    auto head = ConsensusHead::create(cfg, rng);
    for (auto& [_, t] : head.teacher) t.mutable_value() += random_matrix(t.rows(), t.cols(), seed + 50, 0.3);
    head.center = random_matrix(1, cfg.categories, seed + 60).row(0);
    Matrix x = random_matrix(2 + seed % 3, 3, seed + 70, 2.0);
    EXPECT_NEAR(consensus_loss(head, Tensor(x), cfg).item(),
                brute_force_pairwise_loss(head, cfg, x), 1e-10)
        << "seed " << seed;
  }
}

TEST(ConsensusLoss, AgentPermutationInvariant) {
  ConsensusConfig cfg;
  cfg.input_dim = 3;
  Rng rng(9);
  auto head = ConsensusHead::create(cfg, rng);
  Matrix x = random_matrix(4, 3, 10);
  Matrix permuted(4, 3);
  permuted << x.row(2), x.row(0), x.row(3), x.row(1);
  EXPECT_NEAR(consensus_loss(head, Tensor(x), cfg).item(),
              consensus_loss(head, Tensor(permuted), cfg).item(), 1e-12);
}

TEST(ConsensusLoss, GroupedLossIsMeanOfPerGroupLosses) {
  ConsensusConfig cfg;
  cfg.input_dim = 3;
  Rng rng(4);
  auto head = ConsensusHead::create(cfg, rng);
  Matrix x = random_matrix(6, 3, 12);
  const double a = consensus_loss(head, Tensor(x.topRows(3)), cfg).item();
  const double b = consensus_loss(head, Tensor(x.bottomRows(3)), cfg).item();
  EXPECT_NEAR(consensus_loss_grouped(head, x, 3, cfg).item(), 0.5 * (a + b),
              1e-12);
}

TEST(ConsensusLoss, EmptyBatchRejected) {
  ConsensusConfig cfg;
  cfg.input_dim = 3;
  Rng rng(1);
  auto head = ConsensusHead::create(cfg, rng);
  EXPECT_THROW(consensus_loss(head, Tensor(Matrix(0, 3)), cfg),
               std::invalid_argument);
  EXPECT_THROW(consensus_loss(head, Tensor(Matrix::Zero(2, 4)), cfg),
               ShapeError);
}

TEST(ConsensusLoss, StudentGradientMatchesFiniteDifferences) {
  ConsensusConfig cfg;
  cfg.input_dim = 3;
  cfg.categories = 2;
  cfg.encoder_widths = {4};
  Rng rng(17);
  auto head = ConsensusHead::create(cfg, rng);
  for (auto& [_, t] : head.teacher) t.mutable_value() += random_matrix(t.rows(), t.cols(), 3, 0.2);
  Matrix x = random_matrix(2, 3, 18, 1.5);
  backward(consensus_loss(head, Tensor(x), cfg));
  auto check = testing::check_gradients(
      head.student, [&] { return consensus_loss(head, Tensor(x), cfg).item(); });
  EXPECT_LT(check.max_rel_error, 1e-4) << check.worst;
  for (const auto& [name, t] : head.teacher) {
    EXPECT_FALSE(t.has_grad()) << name;
    EXPECT_TRUE(t.grad().isZero(0.0)) << name;
  }
}

TEST(ConsensusCategory, ArgmaxAndTieRule) {
  ConsensusConfig k1;
  k1.input_dim = 2;
  k1.categories = 1;
  Rng rng(1);
  auto head1 = ConsensusHead::create(k1, rng);
  EXPECT_EQ(consensus_category(head1, random_matrix(1, 2, 4).row(0), k1).index, 0);

  // Zero weights and bias tau * log(p) reproduce a chosen distribution.
  auto cfg = linear_cfg(1, 3, 0.1, 0.1);
  Matrix b(1, 3);
  b << 0.1 * std::log(0.1), 0.1 * std::log(0.7), 0.1 * std::log(0.2);
  auto head = linear_head(cfg, Matrix::Zero(1, 3), b);
  RowVector x = RowVector::Ones(1);
  Matrix p = student_distribution(head, Tensor(Matrix(x)), cfg).value();
  EXPECT_NEAR(p(0, 1), 0.7, 1e-12);
  EXPECT_EQ(consensus_category(head, x, cfg).index, 1);

  auto tie_cfg = linear_cfg(1, 2, 0.1, 0.1);
  auto tie = linear_head(tie_cfg, Matrix::Zero(1, 2), Matrix::Zero(1, 2));
  EXPECT_EQ(consensus_category(tie, x, tie_cfg).index, 0);
}

TEST(UpdateTeacher, IdentityCopyAndCenterArithmetic) {
  ConsensusConfig cfg;
  cfg.input_dim = 3;
  cfg.categories = 2;
  Rng rng(3);
  auto head = ConsensusHead::create(cfg, rng);
  for (auto& [_, t] : head.student) t.mutable_value() += random_matrix(t.rows(), t.cols(), 7);
  const ParameterSet teacher_before = head.teacher.clone();

  cfg.ema_momentum = 1.0;
  cfg.center_momentum = 1.0;
  update_teacher(head, cfg, Matrix::Ones(4, 2));
  EXPECT_TRUE(head.teacher.equals(teacher_before));
  EXPECT_TRUE(head.center.isZero(0.0));

  cfg.ema_momentum = 0.0;
  cfg.center_momentum = 0.9;
  update_teacher(head, cfg, Matrix::Ones(4, 2));
  EXPECT_TRUE(head.teacher.equals(head.student));
  EXPECT_NEAR(head.center(0), 0.1, 1e-15);
  EXPECT_NEAR(head.center(1), 0.1, 1e-15);
  for (int i = 0; i < 200; ++i) update_teacher(head, cfg, Matrix::Ones(4, 2));
  EXPECT_NEAR(head.center(0), 1.0, 1e-8);
}

TEST(AgreementRate, CountsOrderedPairs) {
  EXPECT_DOUBLE_EQ(agreement_rate({0, 0, 0}, 3), 1.0);
  // Pairs of (0,0,1): 2 of 6 ordered pairs match.
  EXPECT_DOUBLE_EQ(agreement_rate({0, 0, 1}, 3), 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(agreement_rate({0, 1, 1, 1}, 2), 0.5);
  EXPECT_DOUBLE_EQ(agreement_rate({3}, 1), 1.0);
  EXPECT_DOUBLE_EQ(category_entropy({0, 0, 0}, 4), 0.0);
  EXPECT_NEAR(category_entropy({0, 1, 2, 3}, 4), std::log(4.0), 1e-15);
}

TEST(ConsensusTraining, NoisyViewsOfSharedLatentReachAgreement) {
  testing::SyntheticViews gen;
  ConsensusConfig cfg;
  cfg.input_dim = gen.input_dim();
  cfg.categories = 4;
  Rng init(1, "init"), data(1, "data"), eval(1, "eval");
  auto head = ConsensusHead::create(cfg, init);
  AdamState opt(cfg.learning_rate);
  const Matrix eval_x = gen.sample(300, eval);
  const double before = agreement_rate(consensus_categories(head, eval_x, cfg), gen.agents);
  for (int step = 0; step < 800; ++step) {
    Matrix t_logits;
    Tensor loss = consensus_loss_grouped(head, gen.sample(64, data), gen.agents,
                                         cfg, &t_logits);
    backward(loss);
    adam_step(opt, head.student);
    update_teacher(head, cfg, t_logits);
  }
  auto cats = consensus_categories(head, eval_x, cfg);
  EXPECT_GT(agreement_rate(cats, gen.agents), 0.9);
  EXPECT_GT(agreement_rate(cats, gen.agents), before);
  EXPECT_GT(category_entropy(cats, 4), 0.0);
}

}  // namespace
}  // namespace hcmarl
