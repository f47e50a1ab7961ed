#ifndef HCMARL_HIERARCHY_HPP_
#define HCMARL_HIERARCHY_HPP_

#include <vector>

#include "hcmarl/consensus.hpp"
#include "hcmarl/nn.hpp"
#include "hcmarl/optim.hpp"
#include "hcmarl/rng.hpp"
#include "hcmarl/tensor.hpp"

namespace hcmarl {

// A consensus layer reads `window` observations spaced `stride` steps apart:
// timesteps t, t - stride, ..., t - (window - 1) * stride.
struct LayerSpec {
  int window = 1;
  int stride = 1;

  void validate() const;
  int span() const { return (window - 1) * stride + 1; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Per-agent ring buffers of the most recent observations of the current
// episode, tagged with their episode timesteps.
class ObservationHistory {
 public:
  ObservationHistory() = default;
  ObservationHistory(int agents, int obs_dim, int capacity);

  void reset();
  // Timesteps must strictly increase per agent within an episode.
  void push(int agent, int t, const RowVector& obs);

  int agents() const { return static_cast<int>(slots_.size()); }
  int obs_dim() const { return obs_dim_; }
  int capacity() const { return capacity_; }
  bool empty(int agent) const;
  int first_timestep(int agent) const;
  int latest_timestep(int agent) const;
  // Observation recorded at timestep t. Timesteps before the episode start
  // resolve to the earliest observation of the episode.
  const RowVector& at(int agent, int t) const;

 private:
  struct Slot {
    std::vector<RowVector> ring;
    std::vector<int> steps;
    int count = 0;  // pushes since reset
    int first_step = 0;
    RowVector first;
  };
  std::vector<Slot> slots_;
  int obs_dim_ = 0;
  int capacity_ = 0;
};

// Concatenation of agent i's observations at t, t - stride, ... (newest
// first), left-padded with the episode's earliest observation.
RowVector build_layer_input(const ObservationHistory& history, int agent,
                            const LayerSpec& spec, int t);

struct HierarchyConfig {
  std::vector<LayerSpec> layers = {{1, 1}, {5, 3}};
  int embed_dim = 16;  // d_c
  int head_count = 4;
  double embed_init_scale = 1.0;  // std of the category embedding init
  // One per layer; input_dim is filled in from window * obs_dim.
  std::vector<ConsensusConfig> consensus = {ConsensusConfig{},
                                            ConsensusConfig{}};

  void validate() const;
  int layer_count() const { return static_cast<int>(layers.size()); }
  // Ring capacity that covers every layer's window.
  int required_history() const;
  AttentionSpec attention_spec() const;
};

struct ConsensusLayer {
  LayerSpec spec;
  ConsensusConfig cfg;
  ConsensusHead head;
  AdamState optimizer;
};

// Builds one consensus layer per spec with input_dim = window * obs_dim.
std::vector<ConsensusLayer> make_consensus_layers(const HierarchyConfig& cfg,
                                                  int obs_dim, Rng& rng);

// Per-layer argmax categories for one agent; `inputs[m]` is layer m's window.
std::vector<ConsensusCategory> layer_consensus(
    const std::vector<ConsensusLayer>& layers,
    const std::vector<RowVector>& inputs);

// Attention aggregator parameters: "emb.<m>" [K_m x d_c] per layer, "pos"
// [layers x d_c], and the attention projections under "attn.".
ParameterSet make_aggregator(const HierarchyConfig& cfg, Rng& rng);

struct AggregateResult {
  Tensor consensus;  // [1 x d_c] for one agent, [rows x d_c] in batch form
  // Mean attention weight received by each layer token (over heads and
  // queries, and over rows in batch form).
  RowVector layer_weights;
  // Per-head weight matrices; filled only by the single-agent form.
  std::vector<Matrix> head_weights;
};

// c_att = mean over tokens of MultiHead(E_m[c_m] + pos_m). Differentiable in
// the aggregator parameters; categories carry no gradient.
AggregateResult aggregate_attention(const ParameterSet& agg_params,
                                    const std::vector<ConsensusCategory>& cats,
                                    const HierarchyConfig& cfg);

// Batch form: one category tuple per row. Identical tuples are evaluated once
// and gathered, so the tape holds at most one attention block per distinct
// tuple.
AggregateResult aggregate_attention_batch(
    const ParameterSet& agg_params,
    const std::vector<std::vector<int>>& tuples, const HierarchyConfig& cfg);

// Training rows for every layer. Rows come in groups of `group_size`
// consecutive rows, one group per (environment instance, timestep).
struct ConsensusBatch {
  struct Key {
    int instance = 0;
    int timestep = 0;
    friend bool operator==(const Key&, const Key&) = default;
  };
  int group_size = 1;
  std::vector<Matrix> layer_inputs;  // per layer [groups * group_size x dim]
  std::vector<Key> keys;             // per row

  int groups() const;
  // Throws std::invalid_argument when a group mixes timesteps or instances.
  void validate(int layer_count) const;
};

// For each layer independently: consensus loss on that layer's stacked
// windows, backprop into its student, one Adam step per minibatch, then the
// teacher EMA and center update. Returns the per-layer loss averaged over
// minibatches (each measured before its step). minibatch_groups <= 0 uses the
// full batch.
std::vector<double> hierarchy_train_step(std::vector<ConsensusLayer>& layers,
                                         const ConsensusBatch& batch,
                                         int minibatch_groups, int epochs,
                                         Rng& rng);

}  // namespace hcmarl

#endif  // HCMARL_HIERARCHY_HPP_
