#include "hcmarl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace hcmarl {

TaskKind parse_task(const std::string& name) {
  if (name == "predator_prey") return TaskKind::kPredatorPrey;
  if (name == "rendezvous") return TaskKind::kRendezvous;
  if (name == "navigation") return TaskKind::kNavigation;
  if (name == "bandit") return TaskKind::kBandit;
  throw std::invalid_argument("unknown task '" + name +
                              "' (predator_prey, rendezvous, navigation, bandit)");
}

std::string to_string(TaskKind task) {
  switch (task) {
    case TaskKind::kPredatorPrey: return "predator_prey";
    case TaskKind::kRendezvous: return "rendezvous";
    case TaskKind::kNavigation: return "navigation";
    case TaskKind::kBandit: return "bandit";
  }
  return "?";
}

void EnvConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(agents >= 1, "env.agents must be >= 1");
  require(arena > 0, "env.arena must be > 0");
  require(step_limit >= 1, "env.step_limit must be >= 1");
  require(speed_cap > 0, "env.speed_cap must be > 0");
  require(sensing_radius >= 0, "env.sensing_radius must be >= 0");
  require(nearest >= 0, "env.nearest must be >= 0");
  require(min_separation >= 0, "env.min_separation must be >= 0");
  require(placement_retries >= 1, "env.placement_retries must be >= 1");
  require(gather_radius > 0, "env.gather_radius must be > 0");
  require(capture_radius > 0, "env.capture_radius must be > 0");
  require(prey_speed_factor >= 0, "env.prey_speed_factor must be >= 0");
  require(prey_turn_interval >= 1, "env.prey_turn_interval must be >= 1");
  require(goal_radius > 0, "env.goal_radius must be > 0");
  require(obstacle_radius >= 0, "env.obstacle_radius must be >= 0");
  require(agent_radius >= 0, "env.agent_radius must be >= 0");
  require(collision_penalty >= 0, "env.collision_penalty must be >= 0");
}

namespace {

RowVector xy(double x, double y) {
  RowVector v(2);
  v << x, y;
  return v;
}

double dist(const RowVector& a, const RowVector& b) { return (a - b).norm(); }

double mean_pairwise_distance(const std::vector<RowVector>& p) {
  const std::size_t n = p.size();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) total += dist(p[i], p[j]);
  return total / static_cast<double>(n * (n - 1) / 2);
}

// Rejection-samples `count` points in the box with pairwise separation, also
// kept `sep` away from every point of `avoid`.
std::vector<RowVector> place_points(int count, double x0, double x1, double y0,
                                    double y1, double sep,
                                    const std::vector<RowVector>& avoid,
                                    int retries, Rng& rng) {
  for (int attempt = 0; attempt < retries; ++attempt) {
    std::vector<RowVector> pts;
    int misses = 0;
    while (static_cast<int>(pts.size()) < count && misses < 200) {
      RowVector p = xy(rng.uniform(x0, x1), rng.uniform(y0, y1));
      bool ok = true;
      for (const auto& q : pts) ok = ok && dist(p, q) >= sep;
      for (const auto& q : avoid) ok = ok && dist(p, q) >= sep;
      if (ok) {
        pts.push_back(p);
      } else {
        ++misses;
      }
    }
    if (static_cast<int>(pts.size()) == count) return pts;
  }
  throw std::runtime_error("could not place " + std::to_string(count) +
                           " entities with separation " + std::to_string(sep) +
                           " after " + std::to_string(retries) + " attempts");
}

void set_prey_heading(const EnvConfig& cfg, WorldState& s) {
  const double theta = s.rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double speed = cfg.prey_speed_factor * cfg.speed_cap;
  s.prey_velocity = xy(speed * std::cos(theta), speed * std::sin(theta));
}

RowVector direction(int action) {
  switch (action) {
    case kPlusX: return xy(1, 0);
    case kMinusX: return xy(-1, 0);
    case kPlusY: return xy(0, 1);
    case kMinusY: return xy(0, -1);
    default: return xy(0, 0);
  }
}

int navigation_collisions(const EnvConfig& cfg, const WorldState& s) {
  int count = 0;
  const std::size_t n = s.position.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j)
      if (dist(s.position[i], s.position[j]) < 2.0 * cfg.agent_radius) ++count;
    for (const auto& o : s.obstacles)
      if (dist(s.position[i], o) < cfg.obstacle_radius + cfg.agent_radius) ++count;
  }
  return count;
}

}  // namespace

ObservationLayout observation_layout(const EnvConfig& cfg) {
  ObservationLayout l;
  switch (cfg.task) {
    case TaskKind::kPredatorPrey: l.task = 2; break;
    case TaskKind::kRendezvous: l.task = 0; break;
    case TaskKind::kNavigation: l.task = 6; break;
    case TaskKind::kBandit:
      l.own = 0;
      l.task = 2;
      return l;
  }
  l.neighbors = 2 * cfg.nearest;
  return l;
}

int observation_dim(const EnvConfig& cfg) { return observation_layout(cfg).size(); }

int state_dim(const EnvConfig& cfg) {
  const int time = 1;
  switch (cfg.task) {
    case TaskKind::kPredatorPrey: return 4 * cfg.agents + 4 + time;
    case TaskKind::kRendezvous: return 4 * cfg.agents + time;
    case TaskKind::kNavigation: return 6 * cfg.agents + time;
    case TaskKind::kBandit: return 2 + time;
  }
  return 0;
}

int bandit_optimal_action(int context) { return context == 0 ? kPlusX : kPlusY; }

WorldState reset(const EnvConfig& cfg, Rng& rng) {
  cfg.validate();
  WorldState s;
  s.rng = rng.split("world");
  const double L = cfg.arena;
  const int n = cfg.agents;
  switch (cfg.task) {
    case TaskKind::kRendezvous:
      s.position = place_points(n, 0, L, 0, L, cfg.min_separation, {},
                                cfg.placement_retries, rng);
      break;
    case TaskKind::kPredatorPrey: {
      s.position = place_points(n, 0, L, 0, L, cfg.min_separation, {},
                                cfg.placement_retries, rng);
      const double sep = std::max(cfg.min_separation, cfg.capture_radius);
      s.prey_position = place_points(1, 0, L, 0, L, sep, s.position,
                                     cfg.placement_retries, rng)[0];
      set_prey_heading(cfg, s);
      break;
    }
    case TaskKind::kNavigation:
      // Starts along the bottom edge, goals along the top, obstacles in
      // between on the midline.
      s.obstacles = {xy(L / 3.0, L / 2.0), xy(2.0 * L / 3.0, L / 2.0)};
      s.position = place_points(n, 0.05 * L, 0.95 * L, 0.05 * L, 0.25 * L,
                                cfg.min_separation, {}, cfg.placement_retries, rng);
      s.goals = place_points(n, 0.05 * L, 0.95 * L, 0.75 * L, 0.95 * L,
                             cfg.min_separation, {}, cfg.placement_retries, rng);
      break;
    case TaskKind::kBandit:
      s.position.assign(n, xy(0, 0));
      s.context = s.rng.uniform_int(2);
      break;
  }
  s.velocity.assign(n, xy(0, 0));
  return s;
}

bool task_success(const EnvConfig& cfg, const WorldState& s) {
  const std::size_t n = s.position.size();
  switch (cfg.task) {
    case TaskKind::kRendezvous:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          if (dist(s.position[i], s.position[j]) >= cfg.gather_radius) return false;
      return true;
    case TaskKind::kPredatorPrey:
      for (const auto& p : s.position)
        if (dist(p, s.prey_position) < cfg.capture_radius) return true;
      return false;
    case TaskKind::kNavigation:
      for (std::size_t i = 0; i < n; ++i)
        if (dist(s.position[i], s.goals[i]) >= cfg.goal_radius) return false;
      return true;
    case TaskKind::kBandit:
      return false;
  }
  return false;
}

StepResult step(const EnvConfig& cfg, WorldState& s,
                const std::vector<int>& joint_action) {
  const int n = static_cast<int>(s.position.size());
  if (static_cast<int>(joint_action.size()) != n) {
    throw std::invalid_argument("joint action has " +
                                std::to_string(joint_action.size()) +
                                " entries for " + std::to_string(n) + " agents");
  }
  for (int a : joint_action) {
    if (a < 0 || a >= kActionCount) {
      throw std::invalid_argument("action " + std::to_string(a) +
                                  " outside [0, " + std::to_string(kActionCount) + ")");
    }
  }
  if (s.timestep >= cfg.step_limit) {
    throw std::logic_error("step called after the episode step limit");
  }
  StepResult r;
  const double L = cfg.arena;

  if (cfg.task == TaskKind::kBandit) {
    double correct = 0.0;
    for (int a : joint_action) correct += a == bandit_optimal_action(s.context) ? 1.0 : 0.0;
    r.reward = correct / n;
    s.context = s.rng.uniform_int(2);
    ++s.timestep;
    r.truncated = r.done = s.timestep >= cfg.step_limit;
    return r;
  }

  for (int i = 0; i < n; ++i) {
    RowVector& v = s.velocity[i];
    RowVector& p = s.position[i];
    v = 0.5 * v + 0.5 * cfg.speed_cap * direction(joint_action[i]);
    const double speed = v.norm();
    if (speed > cfg.speed_cap) v *= cfg.speed_cap / speed;
    p += v;
    for (int d = 0; d < 2; ++d) {
      if (p(d) < 0.0 || p(d) > L) {
        p(d) = std::clamp(p(d), 0.0, L);
        v(d) = 0.0;
      }
    }
  }

  if (cfg.task == TaskKind::kPredatorPrey) {
    if (s.timestep > 0 && s.timestep % cfg.prey_turn_interval == 0) {
      set_prey_heading(cfg, s);
    }
    s.prey_position += s.prey_velocity;
    for (int d = 0; d < 2; ++d) {
      if (s.prey_position(d) < 0.0) {
        s.prey_position(d) = -s.prey_position(d);
        s.prey_velocity(d) = -s.prey_velocity(d);
      } else if (s.prey_position(d) > L) {
        s.prey_position(d) = 2.0 * L - s.prey_position(d);
        s.prey_velocity(d) = -s.prey_velocity(d);
      }
    }
  }
  ++s.timestep;

  switch (cfg.task) {
    case TaskKind::kRendezvous:
      r.reward = -mean_pairwise_distance(s.position) / L;
      break;
    case TaskKind::kPredatorPrey: {
      double total = 0.0;
      for (const auto& p : s.position) total += dist(p, s.prey_position);
      r.reward = -total / n / L;
      break;
    }
    case TaskKind::kNavigation: {
      double total = 0.0;
      for (int i = 0; i < n; ++i) total += dist(s.position[i], s.goals[i]);
      r.collisions = navigation_collisions(cfg, s);
      r.reward = -total / n / L - cfg.collision_penalty * r.collisions;
      break;
    }
    case TaskKind::kBandit:
      break;
  }
  r.success = task_success(cfg, s);
  if (r.success) r.reward += cfg.success_bonus;
  r.truncated = !r.success && s.timestep >= cfg.step_limit;
  r.done = r.success || r.truncated;
  return r;
}

RowVector observe(const EnvConfig& cfg, const WorldState& s, int agent) {
  const int n = static_cast<int>(s.position.size());
  if (agent < 0 || agent >= n) {
    throw std::out_of_range("observe: agent " + std::to_string(agent) +
                            " outside [0, " + std::to_string(n) + ")");
  }
  const ObservationLayout layout = observation_layout(cfg);
  RowVector o = RowVector::Zero(layout.size());
  if (cfg.task == TaskKind::kBandit) {
    o(s.context) = 1.0;
    return o;
  }
  const double L = cfg.arena;
  const RowVector& self = s.position[agent];
  o.segment(0, 2) = self / L;
  o.segment(2, 2) = s.velocity[agent] / cfg.speed_cap;
  int at = layout.own;
  if (cfg.task == TaskKind::kPredatorPrey) {
    o.segment(at, 2) = (s.prey_position - self) / L;
  } else if (cfg.task == TaskKind::kNavigation) {
    o.segment(at, 2) = (s.goals[agent] - self) / L;
    for (std::size_t k = 0; k < s.obstacles.size(); ++k)
      o.segment(at + 2 + 2 * static_cast<int>(k), 2) = (s.obstacles[k] - self) / L;
  }
  at += layout.task;

  std::vector<std::pair<double, int>> visible;
  for (int j = 0; j < n; ++j) {
    if (j == agent) continue;
    const double d = dist(s.position[j], self);
    if (d <= cfg.sensing_radius) visible.emplace_back(d, j);
  }
  std::sort(visible.begin(), visible.end());
  const int shown = std::min<int>(cfg.nearest, static_cast<int>(visible.size()));
  for (int k = 0; k < shown; ++k) {
    o.segment(at + 2 * k, 2) = (s.position[visible[k].second] - self) / L;
  }
  return o;
}

RowVector global_state(const EnvConfig& cfg, const WorldState& s) {
  RowVector g(state_dim(cfg));
  Index at = 0;
  auto put = [&](const RowVector& v, double scale) {
    g.segment(at, v.size()) = v / scale;
    at += v.size();
  };
  if (cfg.task == TaskKind::kBandit) {
    g.setZero();
    g(s.context) = 1.0;
    at = 2;
  } else {
    for (std::size_t i = 0; i < s.position.size(); ++i) {
      put(s.position[i], cfg.arena);
      put(s.velocity[i], cfg.speed_cap);
    }
    if (cfg.task == TaskKind::kPredatorPrey) {
      put(s.prey_position, cfg.arena);
      put(s.prey_velocity, cfg.speed_cap);
    } else if (cfg.task == TaskKind::kNavigation) {
      for (const auto& goal : s.goals) put(goal, cfg.arena);
    }
  }
  g(at) = static_cast<double>(s.timestep) / cfg.step_limit;
  return g;
}

std::pair<double, double> reward_bounds(const EnvConfig& cfg) {
  const double far = std::sqrt(2.0);  // diagonal / L
  switch (cfg.task) {
    case TaskKind::kBandit: return {0.0, 1.0};
    case TaskKind::kNavigation: {
      const double n = cfg.agents;
      const double events = n * (n - 1) / 2 + 2 * n;
      return {-far - cfg.collision_penalty * events, cfg.success_bonus};
    }
    default: return {-far, cfg.success_bonus};
  }
}

EpisodeResult episode_metrics(const std::vector<bool>& success_flags,
                              const std::vector<double>& rewards,
                              int step_limit) {
  EpisodeResult out;
  out.steps_to_complete = step_limit;
  for (std::size_t k = 0; k < success_flags.size(); ++k) {
    if (success_flags[k]) {
      out.success = true;
      out.steps_to_complete = static_cast<int>(k);
      break;
    }
  }
  for (double r : rewards) out.total_reward += r;
  return out;
}

void dump_trajectory(std::ostream& out, const EnvConfig& cfg,
                     const std::vector<TrajectoryRecord>& records) {
  const auto old_precision = out.precision(17);
  out << "format_version=1 task=" << to_string(cfg.task)
      << " agents=" << cfg.agents << " arena=" << cfg.arena << "\n";
  auto pt = [&](const RowVector& v) { out << v(0) << ':' << v(1); };
  for (const auto& rec : records) {
    const WorldState& s = rec.state;
    out << "t=" << s.timestep << " reward=" << rec.reward << " actions=";
    for (std::size_t i = 0; i < rec.joint_action.size(); ++i)
      out << (i ? "," : "") << rec.joint_action[i];
    out << " pos=";
    for (std::size_t i = 0; i < s.position.size(); ++i) {
      if (i) out << ';';
      pt(s.position[i]);
    }
    out << " vel=";
    for (std::size_t i = 0; i < s.velocity.size(); ++i) {
      if (i) out << ';';
      pt(s.velocity[i]);
    }
    if (cfg.task == TaskKind::kPredatorPrey) {
      out << " prey=";
      pt(s.prey_position);
    } else if (cfg.task == TaskKind::kNavigation) {
      out << " goals=";
      for (std::size_t i = 0; i < s.goals.size(); ++i) {
        if (i) out << ';';
        pt(s.goals[i]);
      }
    } else if (cfg.task == TaskKind::kBandit) {
      out << " context=" << s.context;
    }
    out << "\n";
  }
  out.precision(old_precision);
}

}  // namespace hcmarl
