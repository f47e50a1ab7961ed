#include <gtest/gtest.h>

#include <cmath>

#include "consensus_oracle.hpp"
#include "hcmarl/hierarchy.hpp"
#include "synthetic_views.hpp"
#include "test_support.hpp"

namespace hcmarl {
namespace {

using testing::naive_matmul;
using testing::naive_softmax;
using testing::random_matrix;

RowVector obs_of(int t, int agent = 0) {
  RowVector v(2);
  v << t, 100 + agent;
  return v;
}

ObservationHistory filled_history(int first, int last, int capacity = 32) {
  ObservationHistory h(2, 2, capacity);
  for (int t = first; t <= last; ++t)
    for (int a = 0; a < 2; ++a) h.push(a, t, obs_of(t, a));
  return h;
}

TEST(LayerSpec, RejectsNonPositive) {
  EXPECT_THROW((LayerSpec{0, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((LayerSpec{1, 0}.validate()), std::invalid_argument);
  EXPECT_EQ((LayerSpec{5, 3}.span()), 13);
}

TEST(BuildLayerInput, SingleWindowIsCurrentObservation) {
  auto h = filled_history(0, 7);
  EXPECT_EQ(build_layer_input(h, 1, {1, 1}, 7), obs_of(7, 1));
}

TEST(BuildLayerInput, StridedWindowNewestFirst) {
  auto h = filled_history(0, 10);
  RowVector x = build_layer_input(h, 0, {3, 2}, 10);
  ASSERT_EQ(x.size(), 6);
  EXPECT_EQ(x(0), 10);
  EXPECT_EQ(x(2), 8);
  EXPECT_EQ(x(4), 6);
}

TEST(BuildLayerInput, LeftPadsWithEarliestObservation) {
  auto h = filled_history(0, 1);
  RowVector x = build_layer_input(h, 0, {3, 2}, 1);
  EXPECT_EQ(x(0), 1);
  EXPECT_EQ(x(2), 0);
  EXPECT_EQ(x(4), 0);
}

TEST(BuildLayerInput, EmptyHistoryRejected) {
  ObservationHistory h(1, 2, 4);
  EXPECT_THROW(build_layer_input(h, 0, {1, 1}, 0), std::logic_error);
}

TEST(BuildLayerInput, RepeatedCallsAgreeBitwise) {
  auto h = filled_history(0, 20, 16);
  RowVector a = build_layer_input(h, 1, {5, 3}, 20);
  RowVector b = build_layer_input(h, 1, {5, 3}, 20);
  EXPECT_EQ(a, b);
}

TEST(ObservationHistory, ResetAndOrdering) {
  auto h = filled_history(0, 3);
  EXPECT_THROW(h.push(0, 3, obs_of(3)), std::invalid_argument);
  h.reset();
  EXPECT_TRUE(h.empty(0));
  h.push(0, 0, obs_of(0));
  EXPECT_EQ(h.first_timestep(0), 0);
  EXPECT_EQ(h.latest_timestep(0), 0);
}

TEST(ObservationHistory, EvictedTimestepRejected) {
  auto h = filled_history(0, 20, 4);
  EXPECT_EQ(h.at(0, 17), obs_of(17));
  EXPECT_THROW(h.at(0, 10), std::out_of_range);
}

TEST(HierarchyConfig, Validation) {
  HierarchyConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.required_history(), 13);
  cfg.head_count = 3;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.head_count = 4;
  cfg.layers.clear();
  cfg.consensus.clear();
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

HierarchyConfig config_with(std::vector<LayerSpec> layers, int k = 4,
                            int dim = 16, int heads = 4) {
  HierarchyConfig cfg;
  cfg.layers = layers;
  cfg.embed_dim = dim;
  cfg.head_count = heads;
  cfg.consensus.assign(layers.size(), ConsensusConfig{});
  for (auto& c : cfg.consensus) c.categories = k;
  return cfg;
}

TEST(LayerConsensus, SingleLayerAndSingleCategory) {
  Rng rng(1);
  auto one = make_consensus_layers(config_with({{1, 1}}), 3, rng);
  EXPECT_EQ(layer_consensus(one, {random_matrix(1, 3, 1).row(0)}).size(), 1u);

  auto k1 = make_consensus_layers(config_with({{1, 1}, {3, 2}}, 1), 3, rng);
  auto cats = layer_consensus(
      k1, {random_matrix(1, 3, 2).row(0), random_matrix(1, 9, 3).row(0)});
  ASSERT_EQ(cats.size(), 2u);
  EXPECT_EQ(cats[0].index, 0);
  EXPECT_EQ(cats[1].index, 0);
}

TEST(LayerConsensus, TwoLayersMatchPerLayerOracle) {
  Rng rng(2);
  auto layers = make_consensus_layers(config_with({{1, 1}, {2, 1}}), 3, rng);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RowVector> inputs = {random_matrix(1, 3, 10 + trial, 3.0).row(0),
                                     random_matrix(1, 6, 40 + trial, 3.0).row(0)};
    auto cats = layer_consensus(layers, inputs);
    for (int m = 0; m < 2; ++m) {
      Matrix logits = testing::oracle_logits(layers[m].head.student,
                                             layers[m].head.spec, inputs[m]);
      int best = 0;
      for (int k = 1; k < logits.cols(); ++k)
        if (logits(0, k) > logits(0, best)) best = k;
      EXPECT_EQ(cats[m].index, best) << "trial " << trial << " layer " << m;
    }
  }
}

TEST(Aggregator, ParameterShapes) {
  Rng rng(3);
  auto cfg = config_with({{1, 1}, {5, 3}});
  cfg.consensus[1].categories = 6;
  auto agg = make_aggregator(cfg, rng);
  EXPECT_EQ(agg.at("emb.0").shape(), (std::vector<Index>{4, 16}));
  EXPECT_EQ(agg.at("emb.1").shape(), (std::vector<Index>{6, 16}));
  EXPECT_EQ(agg.at("pos").shape(), (std::vector<Index>{2, 16}));
  EXPECT_TRUE(agg.contains("attn.wq"));
}

TEST(Aggregator, SingleLayerIsValueProjection) {
  Rng rng(4);
  auto cfg = config_with({{1, 1}});
  auto agg = make_aggregator(cfg, rng);
  auto r = aggregate_attention(agg, {ConsensusCategory{2}}, cfg);
  Matrix token = agg.at("emb.0").value().row(2) + agg.at("pos").value().row(0);
  Matrix expected = naive_matmul(token, agg.at("attn.wv").value());
  EXPECT_LT((r.consensus.value() - expected).cwiseAbs().maxCoeff(), 1e-13);
  for (const auto& w : r.head_weights) EXPECT_DOUBLE_EQ(w(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.layer_weights(0), 1.0);
}

TEST(Aggregator, IdenticalTokensSplitAttentionEvenly) {
  Rng rng(5);
  auto cfg = config_with({{1, 1}, {3, 2}});
  auto agg = make_aggregator(cfg, rng);
  agg.at("emb.1").mutable_value() = agg.at("emb.0").value();
  agg.at("pos").mutable_value().row(1) = agg.at("pos").value().row(0);
  auto r = aggregate_attention(agg, {ConsensusCategory{1}, ConsensusCategory{1}}, cfg);
  ASSERT_EQ(r.head_weights.size(), 4u);
  for (const auto& w : r.head_weights) {
    EXPECT_TRUE(w.isApproxToConstant(0.5, 1e-14));
  }
}

TEST(Aggregator, OneHeadHandSetMatchesAttentionOracle) {
  auto cfg = config_with({{1, 1}, {3, 2}}, 2, 2, 1);
  Rng rng(6);
  auto agg = make_aggregator(cfg, rng);
  agg.at("emb.0").mutable_value() << 1.0, 0.0, 0.5, -0.5;
  agg.at("emb.1").mutable_value() << 0.0, 1.0, -1.0, 0.2;
  agg.at("pos").mutable_value() << 0.1, 0.0, 0.0, 0.1;
  agg.at("attn.wq").mutable_value() << 1.0, 0.5, -0.3, 0.8;
  agg.at("attn.wk").mutable_value() << 0.7, 0.0, 0.2, 1.1;
  agg.at("attn.wv").mutable_value() << 0.4, -0.6, 1.0, 0.3;

  // Tokens for categories (1, 0).
  Matrix x(2, 2);
  x << 0.5 + 0.1, -0.5 + 0.0, 0.0 + 0.0, 1.0 + 0.1;
  Matrix q = naive_matmul(x, agg.at("attn.wq").value());
  Matrix k = naive_matmul(x, agg.at("attn.wk").value());
  Matrix v = naive_matmul(x, agg.at("attn.wv").value());
  Matrix pooled = Matrix::Zero(1, 2);
  for (int i = 0; i < 2; ++i) {
    std::vector<double> s(2);
    for (int j = 0; j < 2; ++j)
      s[j] = (q(i, 0) * k(j, 0) + q(i, 1) * k(j, 1)) / std::sqrt(2.0);
    auto a = naive_softmax(s);
    for (int j = 0; j < 2; ++j) pooled.row(0) += 0.5 * a[j] * v.row(j);
  }
  auto r = aggregate_attention(agg, {ConsensusCategory{1}, ConsensusCategory{0}}, cfg);
  EXPECT_LT((r.consensus.value() - pooled).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Aggregator, WeightsSumToOnePerHead) {
  Rng rng(7);
  auto cfg = config_with({{1, 1}, {3, 2}, {5, 3}});
  auto agg = make_aggregator(cfg, rng);
  auto r = aggregate_attention(
      agg, {ConsensusCategory{0}, ConsensusCategory{3}, ConsensusCategory{1}}, cfg);
  for (const auto& w : r.head_weights) {
    for (Index i = 0; i < w.rows(); ++i) EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-14);
  }
  EXPECT_NEAR(r.layer_weights.sum(), 1.0, 1e-14);
}

TEST(Aggregator, RejectsBadCategories) {
  Rng rng(8);
  auto cfg = config_with({{1, 1}, {3, 2}});
  auto agg = make_aggregator(cfg, rng);
  EXPECT_THROW(aggregate_attention(agg, {ConsensusCategory{4}, ConsensusCategory{0}}, cfg),
               std::out_of_range);
  EXPECT_THROW(aggregate_attention(agg, {ConsensusCategory{-1}, ConsensusCategory{0}}, cfg),
               std::out_of_range);
  EXPECT_THROW(aggregate_attention(agg, {ConsensusCategory{0}}, cfg),
               std::invalid_argument);
}

TEST(Aggregator, BatchFormMatchesPerRowEvaluation) {
  Rng rng(9);
  auto cfg = config_with({{1, 1}, {3, 2}});
  auto agg = make_aggregator(cfg, rng);
  std::vector<std::vector<int>> tuples = {{0, 1}, {2, 3}, {0, 1}, {3, 3}, {2, 3}};
  auto batch = aggregate_attention_batch(agg, tuples, cfg);
  ASSERT_EQ(batch.consensus.rows(), 5);
  for (std::size_t r = 0; r < tuples.size(); ++r) {
    auto single = aggregate_attention(
        agg, {ConsensusCategory{tuples[r][0]}, ConsensusCategory{tuples[r][1]}}, cfg);
    EXPECT_EQ(Matrix(batch.consensus.value().row(r)), single.consensus.value())
        << "row " << r;
  }
  // Gradients through the gathered rows equal the sum over rows.
  backward(sum(batch.consensus));
  const Matrix batch_grad = agg.at("emb.0").grad();
  agg.zero_grad();
  std::vector<Tensor> parts;
  for (const auto& t : tuples)
    parts.push_back(aggregate_attention(
        agg, {ConsensusCategory{t[0]}, ConsensusCategory{t[1]}}, cfg).consensus);
  backward(sum(concat_rows(parts)));
  EXPECT_LT((agg.at("emb.0").grad() - batch_grad).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Aggregator, GradientMatchesFiniteDifferences) {
  Rng rng(10);
  auto cfg = config_with({{1, 1}, {3, 2}}, 3, 4, 2);
  auto agg = make_aggregator(cfg, rng);
  Matrix target = random_matrix(1, 4, 11);
  std::vector<ConsensusCategory> cats = {ConsensusCategory{2}, ConsensusCategory{0}};
  auto loss_fn = [&] {
    return sum(square(sub(aggregate_attention(agg, cats, cfg).consensus,
                          Tensor(target))));
  };
  backward(loss_fn());
  auto check = testing::check_gradients(agg, [&] { return loss_fn().item(); });
  EXPECT_LT(check.max_rel_error, 1e-5) << check.worst;
}

ConsensusBatch synthetic_batch(const testing::SyntheticViews& gen, int groups,
                               int layers, Rng& rng) {
  ConsensusBatch b;
  b.group_size = gen.agents;
  Matrix x = gen.sample(groups, rng);
  for (int m = 0; m < layers; ++m) b.layer_inputs.push_back(x);
  for (int g = 0; g < groups; ++g)
    for (int a = 0; a < gen.agents; ++a) b.keys.push_back({0, g});
  return b;
}

TEST(HierarchyTrainStep, MixedTimestepGroupRejected) {
  testing::SyntheticViews gen;
  Rng rng(1);
  auto cfg = config_with({{1, 1}});
  cfg.consensus[0].input_dim = gen.input_dim();
  auto layers = make_consensus_layers(cfg, gen.input_dim(), rng);
  auto batch = synthetic_batch(gen, 3, 1, rng);
  batch.keys[5].timestep = 99;
  EXPECT_THROW(hierarchy_train_step(layers, batch, 0, 1, rng),
               std::invalid_argument);
  batch.keys[5].timestep = 1;
  batch.keys[5].instance = 3;
  EXPECT_THROW(hierarchy_train_step(layers, batch, 0, 1, rng),
               std::invalid_argument);
}

TEST(HierarchyTrainStep, ZeroLearningRateIsNoOp) {
  testing::SyntheticViews gen;
  Rng rng(2);
  auto cfg = config_with({{1, 1}});
  cfg.consensus[0].learning_rate = 0.0;
  // The center is a running statistic of teacher outputs and moves even
  // without learning; freeze it to make repeats exact.
  cfg.consensus[0].center_momentum = 1.0;
  auto layers = make_consensus_layers(cfg, gen.input_dim(), rng);
  const ParameterSet student = layers[0].head.student.clone();
  const ParameterSet teacher = layers[0].head.teacher.clone();
  auto batch = synthetic_batch(gen, 8, 1, rng);
  const double first = hierarchy_train_step(layers, batch, 0, 1, rng)[0];
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(hierarchy_train_step(layers, batch, 0, 1, rng)[0], first);
  }
  EXPECT_TRUE(layers[0].head.student.equals(student));
  EXPECT_TRUE(layers[0].head.teacher.equals(teacher));
}

TEST(HierarchyTrainStep, TwoLayersReturnPerLayerOracleLosses) {
  testing::SyntheticViews gen;
  gen.agents = 3;
  Rng rng(3);
  auto cfg = config_with({{1, 1}, {2, 1}});
  auto layers = make_consensus_layers(cfg, gen.input_dim() / 2, rng);
  ConsensusBatch batch;
  batch.group_size = 3;
  batch.layer_inputs = {gen.sample(4, rng).leftCols(layers[0].cfg.input_dim),
                        gen.sample(4, rng).leftCols(layers[1].cfg.input_dim)};
  for (int g = 0; g < 4; ++g)
    for (int a = 0; a < 3; ++a) batch.keys.push_back({1, g});

  std::vector<double> expected;
  for (int m = 0; m < 2; ++m) {
    double total = 0.0;
    for (int g = 0; g < 4; ++g) {
      total += testing::brute_force_pairwise_loss(
          layers[m].head, layers[m].cfg, batch.layer_inputs[m].middleRows(3 * g, 3));
    }
    expected.push_back(total / 4.0);
  }
  // Layer 1 alone must not depend on layer 0 having been trained first.
  std::vector<ConsensusLayer> only_second = {layers[1]};
  only_second[0].head.student = layers[1].head.student.clone();
  only_second[0].head.teacher = layers[1].head.teacher.clone();
  ConsensusBatch second = batch;
  second.layer_inputs = {batch.layer_inputs[1]};

  auto losses = hierarchy_train_step(layers, batch, 0, 1, rng);
  ASSERT_EQ(losses.size(), 2u);
  EXPECT_NEAR(losses[0], expected[0], 1e-10);
  EXPECT_NEAR(losses[1], expected[1], 1e-10);

  auto alone = hierarchy_train_step(only_second, second, 0, 1, rng);
  EXPECT_EQ(alone[0], losses[1]);
  EXPECT_TRUE(only_second[0].head.student.equals(layers[1].head.student));
}

TEST(HierarchyTrainStep, SingleAgentApproachesTeacherEntropy) {
  // With one agent per group the loss is CE(teacher, student) on the same
  // input, bounded below by the teacher's entropy; training closes the gap.
  testing::SyntheticViews gen;
  gen.agents = 1;
  Rng rng(4);
  auto cfg = config_with({{1, 1}});
  cfg.consensus[0].learning_rate = 3e-3;
  auto layers = make_consensus_layers(cfg, gen.input_dim(), rng);
  auto batch = synthetic_batch(gen, 32, 1, rng);
  std::vector<double> losses;
  for (int i = 0; i < 600; ++i)
    losses.push_back(hierarchy_train_step(layers, batch, 0, 1, rng)[0]);

  const auto& head = layers[0].head;
  const Matrix t = teacher_distribution(head, batch.layer_inputs[0], layers[0].cfg);
  double entropy = 0.0;
  for (Index i = 0; i < t.size(); ++i)
    if (t.data()[i] > 0) entropy -= t.data()[i] * std::log(t.data()[i]);
  entropy /= static_cast<double>(t.rows());

  const double final_loss = losses.back();
  EXPECT_GE(final_loss + 1e-9, entropy);
  EXPECT_LT(final_loss - entropy, 0.05) << "loss " << final_loss << " H " << entropy;
  EXPECT_LT(final_loss, losses.front());
  // Non-increasing over the tail, up to EMA jitter.
  for (std::size_t i = losses.size() - 50; i < losses.size(); ++i)
    EXPECT_LE(losses[i], losses[i - 1] + 1e-3) << "step " << i;
}

}  // namespace
}  // namespace hcmarl
