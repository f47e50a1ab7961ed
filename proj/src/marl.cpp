#include "hcmarl/marl.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "hcmarl/consensus.hpp"
#include "hcmarl/ops.hpp"

namespace hcmarl {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(gamma > 0.0 && gamma < 1.0, "train.gamma must be in (0, 1)");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "train.gae_lambda must be in [0, 1]");
  require(clip > 0.0, "train.clip must be > 0");
  require(epochs >= 1, "train.epochs must be >= 1");
  require(minibatch_size >= 1, "train.minibatch_size must be >= 1");
  require(rollout_episodes >= 1, "train.rollout_episodes must be >= 1");
  require(instances >= 1, "train.instances must be >= 1");
  require(actor_lr >= 0.0, "train.actor_lr must be >= 0");
  require(critic_lr >= 0.0, "train.critic_lr must be >= 0");
  require(entropy_coef >= 0.0, "train.entropy_coef must be >= 0");
  require(reward_scale > 0.0, "train.reward_scale must be > 0");
  require(target_momentum >= 0.0 && target_momentum <= 1.0,
          "train.target_momentum must be in [0, 1]");
  require(consensus_epochs >= 1, "train.consensus_epochs must be >= 1");
  require(pretrain_steps >= 0, "train.pretrain_steps must be >= 0");
  for (int w : actor_widths) require(w >= 1, "train.actor_widths entries must be >= 1");
  for (int w : critic_widths) require(w >= 1, "train.critic_widths entries must be >= 1");
}

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& widths, int out) {
  std::vector<int> sizes = {in};
  sizes.insert(sizes.end(), widths.begin(), widths.end());
  sizes.push_back(out);
  return sizes;
}

Matrix stack(const std::vector<RowVector>& rows, const std::vector<int>& pick_rows) {
  if (pick_rows.empty()) return Matrix(0, 0);
  Matrix out(static_cast<Index>(pick_rows.size()), rows[pick_rows[0]].size());
  for (std::size_t r = 0; r < pick_rows.size(); ++r) out.row(r) = rows[pick_rows[r]];
  return out;
}

Matrix column(const std::vector<double>& v, const std::vector<int>& pick_rows) {
  Matrix out(static_cast<Index>(pick_rows.size()), 1);
  for (std::size_t r = 0; r < pick_rows.size(); ++r) out(r, 0) = v[pick_rows[r]];
  return out;
}

void shuffle(std::vector<int>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    std::swap(v[i], v[rng.uniform_int(i + 1)]);
  }
}

double row_entropy(const RowVector& logp) {
  double h = 0.0;
  for (Index k = 0; k < logp.size(); ++k) h -= std::exp(logp(k)) * logp(k);
  return h;
}

}  // namespace

ActorNet ActorNet::create(int input_dim, int actions, const TrainConfig& cfg,
                          Rng& rng, const std::string& prefix) {
  ActorNet net;
  net.spec = {layer_sizes(input_dim, cfg.actor_widths, actions), cfg.activation,
              prefix};
  init_mlp(net.params, net.spec, rng, 0.01);
  net.optimizer = AdamState(cfg.actor_lr);
  return net;
}

Policy Policy::create(int agents, int obs_dim, int consensus_dim, int actions,
                      const TrainConfig& cfg, Rng& rng) {
  Policy p;
  p.shared = cfg.share_parameters;
  p.agents = agents;
  p.obs_dim = obs_dim;
  p.consensus_dim = consensus_dim;
  const int count = p.shared ? 1 : agents;
  for (int i = 0; i < count; ++i) {
    Rng net_rng = rng.split("actor." + std::to_string(i));
    p.nets.push_back(ActorNet::create(p.input_dim(), actions, cfg, net_rng));
  }
  return p;
}

int Policy::input_dim() const {
  return obs_dim + consensus_dim + (shared ? agents : 0);
}

RowVector Policy::input(int agent, const RowVector& obs, const RowVector& c) const {
  if (obs.size() != obs_dim || c.size() != consensus_dim) {
    throw ShapeError("policy input: got obs " + std::to_string(obs.size()) +
                     " and consensus " + std::to_string(c.size()) +
                     ", expected " + std::to_string(obs_dim) + " and " +
                     std::to_string(consensus_dim));
  }
  RowVector x = RowVector::Zero(input_dim());
  x.head(obs_dim) = obs;
  x.segment(obs_dim, consensus_dim) = c;
  if (shared) x(obs_dim + consensus_dim + agent) = 1.0;
  return x;
}

Matrix action_log_probs(const ActorNet& actor, const Matrix& inputs) {
  NoGradGuard no_grad;
  return log_softmax_rows(mlp_forward(actor.params, Tensor(inputs), actor.spec).value(), 1.0);
}

ActionSample act(const ActorNet& actor, const RowVector& input, Rng& rng,
                 bool greedy) {
  if (!input.allFinite()) throw std::invalid_argument("act: non-finite input");
  const RowVector logp = action_log_probs(actor, input).row(0);
  ActionSample s;
  if (greedy) {
    s.action = static_cast<int>(argmax_first(logp));
  } else {
    const double u = rng.uniform();
    double cum = 0.0;
    s.action = static_cast<int>(logp.size()) - 1;
    for (Index k = 0; k < logp.size(); ++k) {
      cum += std::exp(logp(k));
      if (u < cum) {
        s.action = static_cast<int>(k);
        break;
      }
    }
  }
  s.log_prob = logp(s.action);
  s.entropy = row_entropy(logp);
  return s;
}

CriticNet CriticNet::create(int input_dim, const TrainConfig& cfg, Rng& rng) {
  CriticNet c;
  c.spec = {layer_sizes(input_dim, cfg.critic_widths, 1), cfg.activation, ""};
  init_mlp(c.params, c.spec, rng);
  c.target = c.params.clone();
  c.optimizer = AdamState(cfg.critic_lr);
  return c;
}

Matrix critic_values(const CriticNet& critic, const ParameterSet& params,
                     const Matrix& inputs) {
  NoGradGuard no_grad;
  return mlp_forward(params, Tensor(inputs), critic.spec).value();
}

namespace {

LocalConsensus local_consensus_cached(
    const std::vector<ConsensusLayer>& layers, const Aggregator& agg,
    const HierarchyConfig& hier, const ObservationHistory& history, int agent,
    int t, bool enabled, std::map<std::vector<int>, RowVector>* cache) {
  LocalConsensus out;
  if (!enabled) {
    out.vector = RowVector::Zero(hier.embed_dim);
    return out;
  }
  NoGradGuard no_grad;
  out.layer_inputs.reserve(layers.size());
  for (const auto& layer : layers) {
    out.layer_inputs.push_back(build_layer_input(history, agent, layer.spec, t));
  }
  for (const auto& c : layer_consensus(layers, out.layer_inputs)) {
    out.categories.push_back(c.index);
  }
  if (cache) {
    auto it = cache->find(out.categories);
    if (it != cache->end()) {
      out.vector = it->second;
      return out;
    }
  }
  std::vector<ConsensusCategory> cats;
  for (int c : out.categories) cats.push_back({c});
  out.vector = aggregate_attention(agg.params, cats, hier).consensus.value().row(0);
  if (cache) cache->emplace(out.categories, out.vector);
  return out;
}

}  // namespace

LocalConsensus local_consensus(const std::vector<ConsensusLayer>& layers,
                               const Aggregator& agg,
                               const HierarchyConfig& hier,
                               const ObservationHistory& history, int agent,
                               int t, bool enabled) {
  return local_consensus_cached(layers, agg, hier, history, agent, t, enabled,
                                nullptr);
}

void RolloutBuffer::check() const {
  const std::size_t s = rewards.size();
  const std::size_t r = actions.size();
  const bool ok = values.size() == s && next_values.size() == s &&
                  terminal.size() == s && segment_end.size() == s &&
                  critic_inputs.size() == s && next_critic_inputs.size() == s &&
                  obs.size() == r && consensus.size() == r &&
                  log_probs.size() == r && r == s * static_cast<std::size_t>(agents) &&
                  (!consensus_enabled || categories.size() == r);
  if (!ok) throw std::logic_error("rollout buffer: sequence lengths disagree");
}

AdvantageResult compute_returns_advantages(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<double>& next_values, const std::vector<bool>& terminal,
    const std::vector<bool>& segment_end, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (n == 0) throw std::invalid_argument("compute_returns_advantages: empty buffer");
  if (values.size() != n || next_values.size() != n || terminal.size() != n ||
      segment_end.size() != n) {
    throw std::invalid_argument("compute_returns_advantages: length mismatch");
  }
  AdvantageResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double bootstrap = terminal[i] ? 0.0 : gamma * next_values[i];
    const double delta = rewards[i] + bootstrap - values[i];
    const double carry = segment_end[i] ? 0.0 : gamma * lambda * next_adv;
    out.advantages[i] = delta + carry;
    out.returns[i] = out.advantages[i] + values[i];
    next_adv = out.advantages[i];
  }
  return out;
}

void compute_returns_advantages(RolloutBuffer& buffer, const TrainConfig& cfg) {
  buffer.check();
  auto r = compute_returns_advantages(buffer.rewards, buffer.values,
                                      buffer.next_values, buffer.terminal,
                                      buffer.segment_end, cfg.gamma, cfg.gae_lambda);
  buffer.returns = std::move(r.returns);
  buffer.advantages = std::move(r.advantages);
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.size() < 2) return;
  const double n = static_cast<double>(adv.size());
  const double mu = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mu) * (a - mu);
  const double sd = std::sqrt(var / n);
  if (!(sd > 0.0)) return;
  for (double& a : adv) a = (a - mu) / sd;
}

Tensor ppo_surrogate(const Tensor& log_probs, const Matrix& old_log_probs,
                     const Matrix& advantages, double clip) {
  Tensor ratio = exp(sub(log_probs, Tensor(old_log_probs)));
  Tensor adv(advantages);
  Tensor unclipped = mul(ratio, adv);
  Tensor clipped = mul(hcmarl::clamp(ratio, 1.0 - clip, 1.0 + clip), adv);
  return mean(minimum(unclipped, clipped));
}

Tensor policy_gradient_objective(const Tensor& log_probs, const Matrix& advantages) {
  return mean(mul(log_probs, Tensor(advantages)));
}

double critic_update(CriticNet& critic, const RolloutBuffer& buffer,
                     const TrainConfig& cfg, Rng& rng) {
  buffer.check();
  const int steps = buffer.steps();
  if (steps == 0) throw std::invalid_argument("critic_update: empty buffer");
  if (!cfg.target_critic && static_cast<int>(buffer.returns.size()) != steps) {
    throw std::logic_error("critic_update: returns not computed");
  }
  std::vector<int> all(steps);
  std::iota(all.begin(), all.end(), 0);
  const Matrix inputs = stack(buffer.critic_inputs, all);

  std::vector<double> targets;
  if (cfg.target_critic) {
    const Matrix next = critic_values(critic, critic.target,
                                      stack(buffer.next_critic_inputs, all));
    targets.resize(steps);
    for (int i = 0; i < steps; ++i) {
      targets[i] = buffer.rewards[i] +
                   (buffer.terminal[i] ? 0.0 : cfg.gamma * next(i, 0));
    }
  } else {
    targets = buffer.returns;
  }
  const Matrix y = column(targets, all);
  const double pre_loss =
      (critic_values(critic, critic.params, inputs) - y).array().square().mean();

  for (int e = 0; e < cfg.epochs; ++e) {
    std::vector<int> order = all;
    shuffle(order, rng);
    for (int start = 0; start < steps; start += cfg.minibatch_size) {
      const int size = std::min(cfg.minibatch_size, steps - start);
      std::vector<int> rows(order.begin() + start, order.begin() + start + size);
      Tensor v = mlp_forward(critic.params, Tensor(stack(buffer.critic_inputs, rows)),
                             critic.spec);
      Tensor loss = mean(square(sub(v, Tensor(column(targets, rows)))));
      backward(loss);
      if (cfg.max_grad_norm > 0) clip_grad_norm(critic.params, cfg.max_grad_norm);
      adam_step(critic.optimizer, critic.params);
      if (cfg.target_critic) ema_blend(critic.target, critic.params, cfg.target_momentum);
    }
  }
  return pre_loss;
}

double actor_update(Policy& policy, Aggregator* agg, const HierarchyConfig& hier,
                    RolloutBuffer& buffer, const TrainConfig& cfg, Rng& rng) {
  buffer.check();
  for (const auto& net : policy.nets) {
    if (net.version != buffer.policy_version) {
      throw std::logic_error("stale rollout buffer: collected at policy version " +
                             std::to_string(buffer.policy_version) +
                             ", policy is at " + std::to_string(net.version));
    }
  }
  if (static_cast<int>(buffer.advantages.size()) != buffer.steps()) {
    throw std::logic_error("actor_update: advantages not computed");
  }
  const int n = buffer.agents;
  const bool recompute = agg != nullptr && buffer.consensus_enabled;
  double objective_total = 0.0;
  int updates = 0;

  std::vector<double> row_adv(buffer.rows());
  for (int r = 0; r < buffer.rows(); ++r) row_adv[r] = buffer.advantages[r / n];

  for (std::size_t k = 0; k < policy.nets.size(); ++k) {
    ActorNet& net = policy.nets[k];
    std::vector<int> mine;
    for (int r = 0; r < buffer.rows(); ++r)
      if (policy.net_index(r % n) == static_cast<int>(k)) mine.push_back(r);
    const int count = static_cast<int>(mine.size());

    for (int e = 0; e < cfg.epochs; ++e) {
      std::vector<int> order = mine;
      shuffle(order, rng);
      for (int start = 0; start < count; start += cfg.minibatch_size) {
        const int size = std::min(cfg.minibatch_size, count - start);
        std::vector<int> rows(order.begin() + start, order.begin() + start + size);

        Tensor c;
        if (recompute) {
          std::vector<std::vector<int>> tuples;
          tuples.reserve(rows.size());
          for (int r : rows) tuples.push_back(buffer.categories[r]);
          c = aggregate_attention_batch(agg->params, tuples, hier).consensus;
        } else {
          c = Tensor(stack(buffer.consensus, rows));
        }
        std::vector<Tensor> parts = {Tensor(stack(buffer.obs, rows)), c};
        if (policy.shared) {
          Matrix onehot = Matrix::Zero(size, n);
          for (int i = 0; i < size; ++i) onehot(i, rows[i] % n) = 1.0;
          parts.push_back(Tensor(onehot));
        }
        Tensor logits = mlp_forward(net.params, concat_cols(parts), net.spec);
        Tensor logp_all = log_softmax(logits);
        std::vector<Index> acts;
        acts.reserve(rows.size());
        for (int r : rows) acts.push_back(buffer.actions[r]);
        Tensor logp = pick(logp_all, acts);
        const Matrix adv = column(row_adv, rows);

        Tensor objective;
        if (cfg.literal_pg) {
          objective = policy_gradient_objective(logp, adv);
        } else {
          objective = ppo_surrogate(logp, column(buffer.log_probs, rows), adv, cfg.clip);
          if (cfg.entropy_coef > 0) {
            Tensor entropy = scale(mean(sum_cols(mul(softmax(logits), logp_all))), -1.0);
            objective = add(objective, scale(entropy, cfg.entropy_coef));
          }
        }
        objective_total += objective.item();
        ++updates;
        backward(scale(objective, -1.0));
        if (cfg.max_grad_norm > 0) clip_grad_norm(net.params, cfg.max_grad_norm);
        adam_step(net.optimizer, net.params);
        if (recompute) {
          if (cfg.max_grad_norm > 0) clip_grad_norm(agg->params, cfg.max_grad_norm);
          adam_step(agg->optimizer, agg->params);
        }
      }
    }
  }
  for (auto& net : policy.nets) ++net.version;
  return updates > 0 ? objective_total / updates : 0.0;
}

Trainer::Trainer(const EnvConfig& env, const TrainConfig& train,
                 const HierarchyConfig& hier, std::uint64_t seed)
    : env_(env), train_(train), hier_(hier) {
  env_.validate();
  train_.validate();
  hier_.validate();
  const int obs_dim = observation_dim(env_);
  const int n = env_.agents;
  Rng actor_rng(seed, "init.actor");
  Rng critic_rng(seed, "init.critic");
  Rng consensus_rng(seed, "init.consensus");
  Rng agg_rng(seed, "init.aggregator");
  policy = Policy::create(n, obs_dim, hier_.embed_dim, kActionCount, train_, actor_rng);
  critic = CriticNet::create(state_dim(env_) + n * hier_.embed_dim, train_, critic_rng);
  layers = make_consensus_layers(hier_, obs_dim, consensus_rng);
  for (std::size_t m = 0; m < layers.size(); ++m) hier_.consensus[m] = layers[m].cfg;
  aggregator.params = make_aggregator(hier_, agg_rng);
  aggregator.optimizer = AdamState(train_.actor_lr);
  streams = {Rng(seed, "env"), Rng(seed, "act"), Rng(seed, "update"),
             Rng(seed, "consensus")};
}

Trainer::Collected Trainer::collect(const std::vector<ConsensusLayer>& heads,
                                    const Aggregator& agg, Rng& env_rng,
                                    Rng& act_rng, bool greedy, int episodes,
                                    std::vector<TrajectoryRecord>* trace) const {
  NoGradGuard no_grad;
  const int n = env_.agents;
  const int obs_dim = observation_dim(env_);
  const bool enabled = train_.consensus_enabled;
  const int layer_count = hier_.layer_count();
  Collected out;
  RolloutBuffer& buf = out.buffer;
  buf.agents = n;
  buf.policy_version = policy.nets[0].version;
  buf.consensus_enabled = enabled;
  out.consensus.group_size = n;
  out.consensus.layer_inputs.assign(layer_count, Matrix());
  std::vector<std::vector<RowVector>> layer_rows(layer_count);
  out.agreement.assign(layer_count, {});
  std::map<std::vector<int>, RowVector> cache;

  auto critic_input = [&](const WorldState& s, const std::vector<RowVector>& cs) {
    RowVector x(state_dim(env_) + n * hier_.embed_dim);
    x.head(state_dim(env_)) = global_state(env_, s);
    for (int i = 0; i < n; ++i)
      x.segment(state_dim(env_) + i * hier_.embed_dim, hier_.embed_dim) = cs[i];
    return x;
  };
  auto consensus_all = [&](const WorldState& s, ObservationHistory& hist,
                           std::vector<LocalConsensus>& lc) {
    lc.clear();
    for (int i = 0; i < n; ++i) hist.push(i, s.timestep, observe(env_, s, i));
    for (int i = 0; i < n; ++i)
      lc.push_back(local_consensus_cached(heads, agg, hier_, hist, i, s.timestep,
                                          enabled, &cache));
  };
  auto vectors = [](const std::vector<LocalConsensus>& lc) {
    std::vector<RowVector> v;
    for (const auto& c : lc) v.push_back(c.vector);
    return v;
  };

  for (int inst = 0; inst < episodes; ++inst) {
    WorldState s = reset(env_, env_rng);
    ObservationHistory history(n, obs_dim, hier_.required_history());
    std::vector<bool> flags = {task_success(env_, s)};
    std::vector<double> rewards;
    std::vector<LocalConsensus> lc;
    consensus_all(s, history, lc);
    for (;;) {
      const int t = s.timestep;
      std::vector<int> joint(n);
      for (int i = 0; i < n; ++i) {
        const RowVector o = history.at(i, t);
        const RowVector x = policy.input(i, o, lc[i].vector);
        const ActorNet& net = policy.net_for(i);
        const ActionSample a = act(net, x, act_rng, greedy);
        joint[i] = a.action;
        buf.obs.push_back(o);
        buf.consensus.push_back(lc[i].vector);
        if (enabled) buf.categories.push_back(lc[i].categories);
        buf.actions.push_back(a.action);
        buf.log_probs.push_back(a.log_prob);
        out.entropy_sum += a.entropy;
      }
      const RowVector cin = critic_input(s, vectors(lc));
      buf.critic_inputs.push_back(cin);
      buf.values.push_back(critic_values(critic, critic.params, cin)(0, 0));
      if (enabled) {
        for (int m = 0; m < layer_count; ++m) {
          std::vector<int> cats;
          for (int i = 0; i < n; ++i) {
            layer_rows[m].push_back(lc[i].layer_inputs[m]);
            cats.push_back(lc[i].categories[m]);
          }
          out.agreement[m].push_back(agreement_rate(cats, n));
        }
        for (int i = 0; i < n; ++i) out.consensus.keys.push_back({inst, t});
      }

      if (trace) trace->push_back({s, joint, 0.0});
      const StepResult r = step(env_, s, joint);
      if (trace) trace->back().reward = r.reward;
      rewards.push_back(r.reward);
      flags.push_back(r.success);
      buf.rewards.push_back(train_.reward_scale * r.reward);
      buf.terminal.push_back(r.success);
      buf.segment_end.push_back(r.done);

      if (r.done) {
        // Bootstrap input for a truncated episode: next-state consensus on a
        // scratch copy of the history.
        ObservationHistory scratch = history;
        std::vector<LocalConsensus> next;
        consensus_all(s, scratch, next);
        const RowVector nin = critic_input(s, vectors(next));
        buf.next_critic_inputs.push_back(nin);
        buf.next_values.push_back(critic_values(critic, critic.params, nin)(0, 0));
        break;
      }
      consensus_all(s, history, lc);
      const RowVector nin = critic_input(s, vectors(lc));
      buf.next_critic_inputs.push_back(nin);
      buf.next_values.push_back(critic_values(critic, critic.params, nin)(0, 0));
    }
    out.episodes.push_back(episode_metrics(flags, rewards, env_.step_limit));
  }
  // The next-value computed for step t is the value of step t + 1.
  for (std::size_t i = 0; i + 1 < buf.values.size(); ++i) {
    if (!buf.segment_end[i]) buf.next_values[i] = buf.values[i + 1];
  }
  if (enabled) {
    for (int m = 0; m < layer_count; ++m) {
      Matrix x(static_cast<Index>(layer_rows[m].size()),
               layer_rows[m].empty() ? 0 : layer_rows[m][0].size());
      for (std::size_t r = 0; r < layer_rows[m].size(); ++r) x.row(r) = layer_rows[m][r];
      out.consensus.layer_inputs[m] = std::move(x);
    }
  }
  buf.check();
  return out;
}

IterationMetrics Trainer::train_iteration() {
  const auto start = std::chrono::steady_clock::now();
  const int episodes = train_.instances * train_.rollout_episodes;
  Collected col = collect(layers, aggregator, streams.env, streams.act, false,
                          episodes, nullptr);
  RolloutBuffer& buf = col.buffer;
  const int layer_count = hier_.layer_count();
  const double nan = std::numeric_limits<double>::quiet_NaN();

  IterationMetrics m;
  m.iteration = iteration + 1;
  m.consensus_loss.assign(layer_count, nan);
  m.agreement_rate.assign(layer_count, nan);
  m.attention_weight.assign(layer_count, nan);

  if (train_.consensus_enabled) {
    for (int l = 0; l < layer_count; ++l) {
      const auto& a = col.agreement[l];
      m.agreement_rate[l] = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
    }
    {
      NoGradGuard no_grad;
      m.attention_weight = [&] {
        RowVector w = aggregate_attention_batch(aggregator.params, buf.categories, hier_)
                          .layer_weights;
        return std::vector<double>(w.data(), w.data() + w.size());
      }();
    }
    if (iteration == 0) {
      for (int k = 0; k < train_.pretrain_steps; ++k) {
        hierarchy_train_step(layers, col.consensus, train_.consensus_minibatch_groups,
                             train_.consensus_epochs, streams.consensus);
      }
    }
    m.consensus_loss = hierarchy_train_step(layers, col.consensus,
                                            train_.consensus_minibatch_groups,
                                            train_.consensus_epochs, streams.consensus);
  }

  compute_returns_advantages(buf, train_);
  if (train_.normalize_advantages) normalize_advantages(buf.advantages);
  m.critic_loss = critic_update(critic, buf, train_, streams.update);
  m.actor_objective = actor_update(policy, train_.consensus_enabled ? &aggregator : nullptr,
                                   hier_, buf, train_, streams.update);

  double reward = 0.0, steps = 0.0, success = 0.0;
  for (const auto& e : col.episodes) {
    reward += e.total_reward;
    steps += e.steps_to_complete;
    success += e.success ? 1.0 : 0.0;
  }
  const double count = static_cast<double>(col.episodes.size());
  m.mean_episode_reward = reward / count;
  m.mean_steps_to_complete = steps / count;
  m.success_rate = success / count;

  m.policy_entropy = col.entropy_sum / buf.rows();

  ++iteration;
  env_steps += buf.steps();
  m.env_steps = env_steps;
  last_buffer_ = std::move(buf);
  m.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

std::vector<EpisodeResult> Trainer::evaluate(int episodes, bool greedy, Rng& rng,
                                             std::vector<TrajectoryRecord>* trace) const {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  Rng env_rng = rng.split("env");
  Rng act_rng = rng.split("act");
  return collect(layers, aggregator, env_rng, act_rng, greedy, episodes, trace).episodes;
}

}  // namespace hcmarl
