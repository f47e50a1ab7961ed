#ifndef HCMARL_MARL_HPP_
#define HCMARL_MARL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "hcmarl/envs.hpp"
#include "hcmarl/hierarchy.hpp"
#include "hcmarl/nn.hpp"
#include "hcmarl/optim.hpp"
#include "hcmarl/rng.hpp"
#include "hcmarl/tensor.hpp"

namespace hcmarl {

struct TrainConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch_size = 256;  // agent-step rows per actor minibatch
  int rollout_episodes = 1;  // full episodes per instance per iteration
  int instances = 1;         // independent environment copies
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  double reward_scale = 1.0;
  // false runs the consensus-free baseline: the consensus inputs are fed as
  // zeros and nothing on the consensus side is trained.
  bool consensus_enabled = true;
  // Plain log pi * A ascent instead of the clipped surrogate.
  bool literal_pg = false;
  // Bootstrap critic targets from an EMA copy instead of GAE returns.
  bool target_critic = false;
  double target_momentum = 0.995;
  bool share_parameters = true;
  bool normalize_advantages = true;
  std::vector<int> actor_widths = {64, 64};
  std::vector<int> critic_widths = {64, 64};
  Activation activation = Activation::kTanh;
  int consensus_epochs = 1;
  int consensus_minibatch_groups = 32;
  // Extra consensus-builder steps on the first iteration's rollout, before
  // any policy update.
  int pretrain_steps = 0;

  void validate() const;
};

struct ActorNet {
  MlpSpec spec;
  ParameterSet params;
  AdamState optimizer;
  // Bumped by every actor_update; a buffer is only usable at its version.
  int version = 0;

  static ActorNet create(int input_dim, int actions, const TrainConfig& cfg,
                         Rng& rng, const std::string& prefix = "");
  int actions() const { return spec.output_dim(); }
};

// One shared actor with an agent one-hot appended to its input, or one
// actor per agent.
struct Policy {
  std::vector<ActorNet> nets;
  bool shared = true;
  int agents = 0;
  int obs_dim = 0;
  int consensus_dim = 0;

  static Policy create(int agents, int obs_dim, int consensus_dim, int actions,
                       const TrainConfig& cfg, Rng& rng);
  int net_index(int agent) const { return shared ? 0 : agent; }
  ActorNet& net_for(int agent) { return nets[net_index(agent)]; }
  const ActorNet& net_for(int agent) const { return nets[net_index(agent)]; }
  int input_dim() const;
  // o_i (+) c_i (+) one-hot(i) when shared.
  RowVector input(int agent, const RowVector& obs, const RowVector& c) const;
};

struct ActionSample {
  int action = 0;
  double log_prob = 0.0;
  double entropy = 0.0;  // of the whole distribution
};

// Log-probabilities over actions, one row per input row; off the tape.
Matrix action_log_probs(const ActorNet& actor, const Matrix& inputs);
// Samples from the categorical distribution (or takes the argmax, smallest
// index on ties, when greedy). log_prob is that of the returned action.
ActionSample act(const ActorNet& actor, const RowVector& input, Rng& rng,
                 bool greedy = false);

struct CriticNet {
  MlpSpec spec;
  ParameterSet params;
  ParameterSet target;
  AdamState optimizer;

  static CriticNet create(int input_dim, const TrainConfig& cfg, Rng& rng);
};

// [rows x 1] state values from the given parameters.
Matrix critic_values(const CriticNet& critic, const ParameterSet& params,
                     const Matrix& inputs);

struct Aggregator {
  ParameterSet params;
  AdamState optimizer;
};

// Consensus vector for one agent from its own history only: per-layer
// windows, per-layer argmax categories, then attention. Zeros when the
// consensus path is disabled.
struct LocalConsensus {
  RowVector vector;
  std::vector<int> categories;           // empty when disabled
  std::vector<RowVector> layer_inputs;   // per layer
};
LocalConsensus local_consensus(const std::vector<ConsensusLayer>& layers,
                               const Aggregator& agg,
                               const HierarchyConfig& hier,
                               const ObservationHistory& history, int agent,
                               int t, bool enabled);

// Rows are step-major: row = step * agents + agent.
struct RolloutBuffer {
  int agents = 0;
  int policy_version = 0;
  bool consensus_enabled = true;

  std::vector<RowVector> obs;
  std::vector<RowVector> consensus;
  std::vector<std::vector<int>> categories;
  std::vector<int> actions;
  std::vector<double> log_probs;

  // Per environment step.
  std::vector<RowVector> critic_inputs;
  std::vector<RowVector> next_critic_inputs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> next_values;  // V(s_{t+1}); ignored when terminal
  std::vector<bool> terminal;       // no bootstrap past this step
  std::vector<bool> segment_end;    // last step of an episode

  std::vector<double> returns;
  std::vector<double> advantages;

  int steps() const { return static_cast<int>(rewards.size()); }
  int rows() const { return static_cast<int>(actions.size()); }
  // Throws std::logic_error when sequence lengths disagree.
  void check() const;
};

struct AdvantageResult {
  std::vector<double> returns;
  std::vector<double> advantages;
};

// GAE(lambda):
//   delta_t = r_t + gamma * (1 - terminal_t) * next_values_t - values_t
//   A_t = delta_t + gamma * lambda * (1 - segment_end_t) * A_{t+1}
// Returns are A_t + values_t. Throws std::invalid_argument when empty.
AdvantageResult compute_returns_advantages(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<double>& next_values, const std::vector<bool>& terminal,
    const std::vector<bool>& segment_end, double gamma, double lambda);
void compute_returns_advantages(RolloutBuffer& buffer, const TrainConfig& cfg);

// Zero mean, unit population std (left alone for fewer than two values or
// zero spread).
void normalize_advantages(std::vector<double>& adv);

// Mean over rows of min(r * A, clip(r, 1 - eps, 1 + eps) * A) with
// r = exp(logp - old_logp).
Tensor ppo_surrogate(const Tensor& log_probs, const Matrix& old_log_probs,
                     const Matrix& advantages, double clip);
// Mean over rows of logp * A.
Tensor policy_gradient_objective(const Tensor& log_probs,
                                 const Matrix& advantages);

// Squared error to the returns (or target-network TD targets). Returns the
// full-batch loss measured before any update.
double critic_update(CriticNet& critic, const RolloutBuffer& buffer,
                     const TrainConfig& cfg, Rng& rng);

// Ascends the surrogate (or literal policy gradient) for every net. When
// `agg` is given, c_att is recomputed on the tape from the stored categories
// so the aggregator trains through this loss. Returns the mean pre-step
// objective. Throws std::logic_error for a buffer from another policy
// version.
double actor_update(Policy& policy, Aggregator* agg,
                    const HierarchyConfig& hier, RolloutBuffer& buffer,
                    const TrainConfig& cfg, Rng& rng);

struct IterationMetrics {
  int iteration = 0;
  std::int64_t env_steps = 0;
  double mean_episode_reward = 0.0;
  double mean_steps_to_complete = 0.0;
  double success_rate = 0.0;
  std::vector<double> consensus_loss;    // per layer
  std::vector<double> agreement_rate;    // per layer
  std::vector<double> attention_weight;  // per layer
  double critic_loss = 0.0;
  double actor_objective = 0.0;
  double policy_entropy = 0.0;
  double wall_clock_seconds = 0.0;
};

struct TrainerStreams {
  Rng env;
  Rng act;
  Rng update;
  Rng consensus;
};

class Trainer {
 public:
  Trainer(const EnvConfig& env, const TrainConfig& train,
          const HierarchyConfig& hier, std::uint64_t seed);

  IterationMetrics train_iteration();

  // Rollout with the current networks (no learning); returns per-episode
  // results. Uses the caller's stream.
  std::vector<EpisodeResult> evaluate(int episodes, bool greedy, Rng& rng,
                                      std::vector<TrajectoryRecord>* trace = nullptr) const;

  const EnvConfig& env_config() const { return env_; }
  const TrainConfig& train_config() const { return train_; }
  const HierarchyConfig& hierarchy_config() const { return hier_; }
  int consensus_dim() const { return hier_.embed_dim; }

  // Full training state, exposed for checkpointing and tests.
  Policy policy;
  CriticNet critic;
  std::vector<ConsensusLayer> layers;
  Aggregator aggregator;
  TrainerStreams streams;
  int iteration = 0;
  std::int64_t env_steps = 0;

  // Buffer of the last iteration, kept for inspection.
  const RolloutBuffer& last_buffer() const { return last_buffer_; }

 private:
  struct Collected {
    RolloutBuffer buffer;
    ConsensusBatch consensus;
    std::vector<EpisodeResult> episodes;
    std::vector<std::vector<double>> agreement;  // per layer, per step
    double entropy_sum = 0.0;
  };
  Collected collect(const std::vector<ConsensusLayer>& layers,
                    const Aggregator& agg, Rng& env_rng, Rng& act_rng,
                    bool greedy, int episodes,
                    std::vector<TrajectoryRecord>* trace) const;

  EnvConfig env_;
  TrainConfig train_;
  HierarchyConfig hier_;
  RolloutBuffer last_buffer_;
};

}  // namespace hcmarl

#endif  // HCMARL_MARL_HPP_
