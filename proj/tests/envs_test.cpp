#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hcmarl/envs.hpp"

namespace hcmarl {
namespace {

RowVector xy(double x, double y) {
  RowVector v(2);
  v << x, y;
  return v;
}

EnvConfig config(TaskKind task, int agents) {
  EnvConfig cfg;
  cfg.task = task;
  cfg.agents = agents;
  return cfg;
}

constexpr TaskKind kKinematic[] = {TaskKind::kPredatorPrey, TaskKind::kRendezvous,
                                   TaskKind::kNavigation};

bool same_world(const WorldState& a, const WorldState& b) {
  if (a.position.size() != b.position.size()) return false;
  for (std::size_t i = 0; i < a.position.size(); ++i) {
    if (a.position[i] != b.position[i] || a.velocity[i] != b.velocity[i]) return false;
  }
  return a.prey_position == b.prey_position && a.goals == b.goals &&
         a.context == b.context && a.timestep == b.timestep;
}

TEST(TaskNames, RoundTrip) {
  for (auto t : {TaskKind::kPredatorPrey, TaskKind::kRendezvous,
                 TaskKind::kNavigation, TaskKind::kBandit}) {
    EXPECT_EQ(parse_task(to_string(t)), t);
  }
  EXPECT_THROW(parse_task("soccer"), std::invalid_argument);
}

TEST(Reset, FixedSeedIsReproducible) {
  for (auto task : kKinematic) {
    auto cfg = config(task, 5);
    Rng a(11), b(11);
    EXPECT_TRUE(same_world(reset(cfg, a), reset(cfg, b))) << to_string(task);
  }
}

TEST(Reset, RespectsMinimumSeparation) {
  for (auto task : kKinematic) {
    for (int agents : {3, 5, 10}) {
      auto cfg = config(task, agents);
      for (int seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        auto s = reset(cfg, rng);
        ASSERT_EQ(static_cast<int>(s.position.size()), agents);
        for (int i = 0; i < agents; ++i) {
          for (int j = i + 1; j < agents; ++j)
            EXPECT_GE((s.position[i] - s.position[j]).norm(), cfg.min_separation);
          EXPECT_TRUE((s.position[i].array() >= 0).all() &&
                      (s.position[i].array() <= cfg.arena).all());
        }
      }
    }
  }
}

TEST(Reset, UnsatisfiableSeparationRejected) {
  auto cfg = config(TaskKind::kRendezvous, 10);
  cfg.min_separation = 5.0;
  cfg.placement_retries = 3;
  Rng rng(1);
  EXPECT_THROW(reset(cfg, rng), std::runtime_error);
}

TEST(Reset, NavigationLayout) {
  auto cfg = config(TaskKind::kNavigation, 3);
  Rng rng(4);
  auto s = reset(cfg, rng);
  ASSERT_EQ(s.obstacles.size(), 2u);
  ASSERT_EQ(s.goals.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_LT(s.position[i](1), s.obstacles[0](1) - cfg.obstacle_radius);
    EXPECT_GT(s.goals[i](1), s.obstacles[0](1) + cfg.obstacle_radius);
  }
}

TEST(Rendezvous, SingleAgentIsTriviallyGathered) {
  auto cfg = config(TaskKind::kRendezvous, 1);
  Rng rng(2);
  auto s = reset(cfg, rng);
  EXPECT_TRUE(task_success(cfg, s));
  auto r = episode_metrics({task_success(cfg, s)}, {}, cfg.step_limit);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.steps_to_complete, 0);
}

TEST(Step, AllStayKeepsAgentsStillButPreyMoves) {
  auto cfg = config(TaskKind::kPredatorPrey, 3);
  Rng rng(3);
  auto s = reset(cfg, rng);
  const auto before = s.position;
  const RowVector prey = s.prey_position;
  step(cfg, s, {kStay, kStay, kStay});
  EXPECT_EQ(s.position, before);
  EXPECT_GT((s.prey_position - prey).norm(), 0.0);
  EXPECT_EQ(s.timestep, 1);
}

TEST(Step, MalformedJointActionRejected) {
  auto cfg = config(TaskKind::kRendezvous, 3);
  Rng rng(3);
  auto s = reset(cfg, rng);
  EXPECT_THROW(step(cfg, s, {0, 1}), std::invalid_argument);
  EXPECT_THROW(step(cfg, s, {0, 1, 5}), std::invalid_argument);
  EXPECT_THROW(step(cfg, s, {0, -1, 2}), std::invalid_argument);
}

TEST(Step, SpeedCapAndArenaClamp) {
  auto cfg = config(TaskKind::kRendezvous, 1);
  Rng rng(5);
  auto s = reset(cfg, rng);
  s.position[0] = xy(1.95, 1.0);
  for (int t = 0; t < 10; ++t) {
    step(cfg, s, {kPlusX});
    EXPECT_LE(s.velocity[0].norm(), cfg.speed_cap + 1e-15);
    EXPECT_LE(s.position[0](0), cfg.arena);
  }
  EXPECT_EQ(s.position[0](0), cfg.arena);
  EXPECT_DOUBLE_EQ(s.position[0](1), 1.0);
}

TEST(Step, VelocityIncrementKinematics) {
  auto cfg = config(TaskKind::kRendezvous, 1);
  Rng rng(5);
  auto s = reset(cfg, rng);
  s.position[0] = xy(1.0, 1.0);
  step(cfg, s, {kPlusY});
  // v = 0.5 * 0 + 0.05 along +y
  EXPECT_DOUBLE_EQ(s.velocity[0](1), 0.05);
  EXPECT_DOUBLE_EQ(s.position[0](1), 1.05);
  step(cfg, s, {kPlusY});
  EXPECT_DOUBLE_EQ(s.velocity[0](1), 0.075);
  step(cfg, s, {kMinusX});
  EXPECT_DOUBLE_EQ(s.velocity[0](0), -0.05);
  EXPECT_DOUBLE_EQ(s.velocity[0](1), 0.0375);
}

TEST(Step, RendezvousGatherEndsEpisodeWithBonus) {
  auto cfg = config(TaskKind::kRendezvous, 3);
  Rng rng(6);
  auto s = reset(cfg, rng);
  s.position = {xy(1.0, 1.0), xy(1.05, 1.0), xy(1.0, 1.05)};
  auto r = step(cfg, s, {kStay, kStay, kStay});
  EXPECT_TRUE(r.success);
  EXPECT_TRUE(r.done);
  EXPECT_FALSE(r.truncated);
  const double mean_pair = (0.05 + 0.05 + std::sqrt(2 * 0.05 * 0.05)) / 3.0;
  EXPECT_NEAR(r.reward, 10.0 - mean_pair / 2.0, 1e-12);
}

TEST(Step, StepLimitTruncates) {
  auto cfg = config(TaskKind::kRendezvous, 2);
  cfg.step_limit = 4;
  Rng rng(6);
  auto s = reset(cfg, rng);
  s.position = {xy(0.0, 0.0), xy(2.0, 2.0)};
  StepResult r;
  for (int t = 0; t < 4; ++t) r = step(cfg, s, {kStay, kStay});
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(r.success);
  EXPECT_THROW(step(cfg, s, {kStay, kStay}), std::logic_error);
}

TEST(Step, NavigationRewardMatchesHandComputation) {
  auto cfg = config(TaskKind::kNavigation, 2);
  Rng rng(7);
  auto s = reset(cfg, rng);
  s.position = {xy(0.5, 1.0), xy(1.5, 0.2)};
  s.goals = {xy(0.5, 1.8), xy(1.5, 0.5)};
  // Agent 0 overlaps the obstacle at (2/3, 1): distance 1/6 < 0.3 + 0.05.
  auto r = step(cfg, s, {kStay, kStay});
  EXPECT_EQ(r.collisions, 1);
  const double expected = -((0.8 + 0.3) / 2.0) / 2.0 - 1.0;
  EXPECT_NEAR(r.reward, expected, 1e-12);

  s.position = {xy(0.5, 1.75), xy(1.5, 0.45)};
  s.velocity = {xy(0, 0), xy(0, 0)};
  r = step(cfg, s, {kStay, kStay});
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.collisions, 0);
  EXPECT_NEAR(r.reward, 10.0 - ((0.05 + 0.05) / 2.0) / 2.0, 1e-12);
}

TEST(Step, PredatorCaptureEndsEpisode) {
  auto cfg = config(TaskKind::kPredatorPrey, 2);
  Rng rng(8);
  auto s = reset(cfg, rng);
  s.prey_velocity = xy(0, 0);
  s.prey_position = xy(1.0, 1.0);
  s.position = {xy(1.1, 1.0), xy(0.2, 0.2)};
  auto r = step(cfg, s, {kStay, kStay});
  EXPECT_TRUE(r.success);
  EXPECT_TRUE(r.done);
  EXPECT_GT(r.reward, 9.0);
}

TEST(Observe, LayoutDimensionsAreFixed) {
  EXPECT_EQ(observation_dim(config(TaskKind::kRendezvous, 3)), 10);
  EXPECT_EQ(observation_dim(config(TaskKind::kPredatorPrey, 3)), 12);
  EXPECT_EQ(observation_dim(config(TaskKind::kNavigation, 3)), 16);
  EXPECT_EQ(observation_dim(config(TaskKind::kBandit, 1)), 2);
  for (auto task : kKinematic) {
    for (int agents : {1, 3, 10}) {
      auto cfg = config(task, agents);
      Rng rng(agents);
      auto s = reset(cfg, rng);
      for (int i = 0; i < agents; ++i)
        EXPECT_EQ(observe(cfg, s, i).size(), observation_dim(cfg));
      EXPECT_EQ(global_state(cfg, s).size(), state_dim(cfg));
    }
  }
}

TEST(Observe, SingleAgentHasEmptyNeighborSlots) {
  auto cfg = config(TaskKind::kRendezvous, 1);
  Rng rng(1);
  auto s = reset(cfg, rng);
  auto o = observe(cfg, s, 0);
  EXPECT_TRUE(o.tail(2 * cfg.nearest).isZero(0.0));
}

TEST(Observe, NeighborsBeyondSensingRadiusAreHidden) {
  auto cfg = config(TaskKind::kRendezvous, 2);
  Rng rng(1);
  auto s = reset(cfg, rng);
  s.position = {xy(0.1, 0.1), xy(1.9, 1.9)};
  EXPECT_TRUE(observe(cfg, s, 0).tail(6).isZero(0.0));
  EXPECT_TRUE(observe(cfg, s, 1).tail(6).isZero(0.0));
}

TEST(Observe, HandSetRelativeVectors) {
  auto cfg = config(TaskKind::kRendezvous, 4);
  cfg.nearest = 2;
  Rng rng(1);
  auto s = reset(cfg, rng);
  s.position = {xy(1.0, 1.0), xy(1.3, 1.0), xy(1.0, 0.6), xy(0.7, 1.0)};
  auto o = observe(cfg, s, 0);
  ASSERT_EQ(o.size(), 8);
  EXPECT_DOUBLE_EQ(o(0), 0.5);
  EXPECT_DOUBLE_EQ(o(1), 0.5);
  // Agents 1 and 3 tie at 0.3; the lower index comes first. Agent 2 at 0.4
  // does not fit in two slots.
  EXPECT_DOUBLE_EQ(o(4), (1.3 - 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(o(5), 0.0);
  EXPECT_DOUBLE_EQ(o(6), (0.7 - 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(o(7), 0.0);
}

TEST(Observe, NavigationTaskBlock) {
  auto cfg = config(TaskKind::kNavigation, 1);
  Rng rng(1);
  auto s = reset(cfg, rng);
  s.position = {xy(0.4, 0.2)};
  s.goals = {xy(1.0, 1.8)};
  auto o = observe(cfg, s, 0);
  EXPECT_DOUBLE_EQ(o(4), 0.3);
  EXPECT_DOUBLE_EQ(o(5), 0.8);
  EXPECT_DOUBLE_EQ(o(6), (2.0 / 3.0 - 0.4) / 2.0);
  EXPECT_DOUBLE_EQ(o(7), 0.4);
  EXPECT_DOUBLE_EQ(o(8), (4.0 / 3.0 - 0.4) / 2.0);
}

TEST(Properties, TranslationLeavesRelativeBlocksAndRewardUnchanged) {
  for (auto task : kKinematic) {
    auto cfg = config(task, 3);
    cfg.arena = 20.0;  // keeps every entity far from the walls
    cfg.sensing_radius = 10.0;
    cfg.min_separation = 0.3;
    const auto layout = observation_layout(cfg);
    Rng rng(9);
    auto a = reset(cfg, rng);
    // Pack the scene into the middle of the arena.
    auto shrink = [&](RowVector& p) { p = xy(8.0, 8.0) + 0.2 * p; };
    for (auto& p : a.position) shrink(p);
    for (auto& g : a.goals) shrink(g);
    for (auto& o : a.obstacles) shrink(o);
    if (task == TaskKind::kPredatorPrey) shrink(a.prey_position);
    WorldState b = a;
    const RowVector shift = xy(1.7, -2.3);
    for (auto& p : b.position) p += shift;
    for (auto& g : b.goals) g += shift;
    for (auto& o : b.obstacles) o += shift;
    if (task == TaskKind::kPredatorPrey) b.prey_position += shift;

    for (int t = 0; t < 15; ++t) {
      const std::vector<int> joint = {t % 5, (t + 2) % 5, (3 * t) % 5};
      for (int i = 0; i < 3; ++i) {
        RowVector oa = observe(cfg, a, i), ob = observe(cfg, b, i);
        EXPECT_LT((oa.tail(layout.task + layout.neighbors) -
                   ob.tail(layout.task + layout.neighbors)).cwiseAbs().maxCoeff(),
                  1e-12);
      }
      auto ra = step(cfg, a, joint);
      auto rb = step(cfg, b, joint);
      EXPECT_NEAR(ra.reward, rb.reward, 1e-12) << to_string(task) << " t=" << t;
    }
  }
}

TEST(Properties, RewardsStayWithinBounds) {
  for (auto task : {TaskKind::kPredatorPrey, TaskKind::kRendezvous,
                    TaskKind::kNavigation, TaskKind::kBandit}) {
    auto cfg = config(task, task == TaskKind::kBandit ? 1 : 4);
    cfg.min_separation = 0.1;
    const auto [lo, hi] = reward_bounds(cfg);
    Rng act(1);
    for (int ep = 0; ep < 20; ++ep) {
      Rng rng(ep);
      auto s = reset(cfg, rng);
      for (int t = 0; t < cfg.step_limit; ++t) {
        std::vector<int> joint(cfg.agents);
        for (auto& a : joint) a = act.uniform_int(kActionCount);
        auto r = step(cfg, s, joint);
        ASSERT_GE(r.reward, lo);
        ASSERT_LE(r.reward, hi);
        if (r.done) break;
      }
    }
  }
}

TEST(Properties, SeedAndActionsDetermineTrajectory) {
  for (auto task : kKinematic) {
    auto cfg = config(task, 3);
    Rng r1(21), r2(21);
    auto a = reset(cfg, r1), b = reset(cfg, r2);
    Rng act(5);
    for (int t = 0; t < 60; ++t) {
      std::vector<int> joint = {act.uniform_int(5), act.uniform_int(5), act.uniform_int(5)};
      auto ra = step(cfg, a, joint);
      auto rb = step(cfg, b, joint);
      ASSERT_EQ(ra.reward, rb.reward);
      ASSERT_TRUE(same_world(a, b));
      if (ra.done) break;
    }
  }
}

TEST(Bandit, RewardsTheContextAction) {
  auto cfg = config(TaskKind::kBandit, 1);
  cfg.step_limit = 50;
  Rng rng(3);
  auto s = reset(cfg, rng);
  int seen[2] = {0, 0};
  for (int t = 0; t < 50; ++t) {
    auto o = observe(cfg, s, 0);
    EXPECT_EQ(o(s.context), 1.0);
    ++seen[s.context];
    auto r = step(cfg, s, {bandit_optimal_action(s.context)});
    EXPECT_EQ(r.reward, 1.0);
    EXPECT_EQ(r.done, t == 49);
  }
  EXPECT_GT(seen[0], 0);
  EXPECT_GT(seen[1], 0);
}

TEST(EpisodeMetrics, PredicateScan) {
  auto r0 = episode_metrics({true, true}, {1.0}, 200);
  EXPECT_TRUE(r0.success);
  EXPECT_EQ(r0.steps_to_complete, 0);

  auto never = episode_metrics(std::vector<bool>(201, false), {}, 200);
  EXPECT_FALSE(never.success);
  EXPECT_EQ(never.steps_to_complete, 200);

  std::vector<bool> flags(40, false);
  flags[37] = true;
  auto r = episode_metrics(flags, {-1.0, -2.0, 10.0}, 200);
  EXPECT_EQ(r.steps_to_complete, 37);
  EXPECT_DOUBLE_EQ(r.total_reward, 7.0);
}

TEST(Trajectory, DumpHasVersionAndOneLinePerStep) {
  auto cfg = config(TaskKind::kPredatorPrey, 2);
  Rng rng(1);
  auto s = reset(cfg, rng);
  std::vector<TrajectoryRecord> recs;
  for (int t = 0; t < 3; ++t) {
    TrajectoryRecord rec{s, {kPlusX, kMinusY}, 0.0};
    rec.reward = step(cfg, s, rec.joint_action).reward;
    recs.push_back(rec);
  }
  std::ostringstream out;
  dump_trajectory(out, cfg, recs);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("format_version=1", 0), 0u);
  int lines = 0;
  while (std::getline(in, line)) {
    EXPECT_NE(line.find("actions=1,4"), std::string::npos);
    EXPECT_NE(line.find("prey="), std::string::npos);
    ++lines;
  }
  EXPECT_EQ(lines, 3);
}

}  // namespace
}  // namespace hcmarl
