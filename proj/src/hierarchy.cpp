#include "hcmarl/hierarchy.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace hcmarl {

void LayerSpec::validate() const {
  if (window < 1) throw std::invalid_argument("layer window m must be >= 1");
  if (stride < 1) throw std::invalid_argument("layer stride must be >= 1");
}

ObservationHistory::ObservationHistory(int agents, int obs_dim, int capacity)
    : slots_(static_cast<std::size_t>(agents)),
      obs_dim_(obs_dim),
      capacity_(capacity) {
  if (agents < 1 || obs_dim < 1 || capacity < 1) {
    throw std::invalid_argument("observation history needs positive sizes");
  }
  for (auto& s : slots_) {
    s.ring.assign(static_cast<std::size_t>(capacity), RowVector::Zero(obs_dim));
    s.steps.assign(static_cast<std::size_t>(capacity), 0);
  }
}

void ObservationHistory::reset() {
  for (auto& s : slots_) s.count = 0;
}

void ObservationHistory::push(int agent, int t, const RowVector& obs) {
  Slot& s = slots_.at(static_cast<std::size_t>(agent));
  if (obs.size() != obs_dim_) {
    throw ShapeError("observation history: width " + std::to_string(obs.size()) +
                     " != " + std::to_string(obs_dim_));
  }
  if (s.count > 0 && t <= latest_timestep(agent)) {
    throw std::invalid_argument(
        "observation history: timesteps must strictly increase within an "
        "episode");
  }
  if (s.count == 0) {
    s.first_step = t;
    s.first = obs;
  }
  const std::size_t pos = static_cast<std::size_t>(s.count % capacity_);
  s.ring[pos] = obs;
  s.steps[pos] = t;
  ++s.count;
}

bool ObservationHistory::empty(int agent) const {
  return slots_.at(static_cast<std::size_t>(agent)).count == 0;
}

int ObservationHistory::first_timestep(int agent) const {
  if (empty(agent)) throw std::logic_error("observation history is empty");
  return slots_[static_cast<std::size_t>(agent)].first_step;
}

int ObservationHistory::latest_timestep(int agent) const {
  const Slot& s = slots_.at(static_cast<std::size_t>(agent));
  if (s.count == 0) throw std::logic_error("observation history is empty");
  return s.steps[static_cast<std::size_t>((s.count - 1) % capacity_)];
}

const RowVector& ObservationHistory::at(int agent, int t) const {
  const Slot& s = slots_.at(static_cast<std::size_t>(agent));
  if (s.count == 0) {
    throw std::invalid_argument("observation history for agent " +
                                std::to_string(agent) + " is empty");
  }
  if (t <= s.first_step) return s.first;
  const int held = std::min(s.count, capacity_);
  for (int back = 0; back < held; ++back) {
    const std::size_t pos =
        static_cast<std::size_t>((s.count - 1 - back) % capacity_);
    if (s.steps[pos] == t) return s.ring[pos];
    if (s.steps[pos] < t) break;
  }
  throw std::out_of_range("observation history: timestep " + std::to_string(t) +
                          " is not held (capacity " +
                          std::to_string(capacity_) + ")");
}

RowVector build_layer_input(const ObservationHistory& history, int agent,
                            const LayerSpec& spec, int t) {
  spec.validate();
  const int d = history.obs_dim();
  RowVector out(spec.window * d);
  for (int k = 0; k < spec.window; ++k) {
    out.segment(k * d, d) = history.at(agent, t - k * spec.stride);
  }
  return out;
}

void HierarchyConfig::validate() const {
  if (layers.empty()) {
    throw std::invalid_argument("hierarchy: at least one layer is required");
  }
  for (const auto& l : layers) l.validate();
  if (consensus.size() != layers.size()) {
    throw std::invalid_argument(
        "hierarchy: need one consensus config per layer");
  }
  if (!(embed_init_scale > 0.0)) {
    throw std::invalid_argument("hierarchy.embed_init_scale must be > 0");
  }
  attention_spec().validate();
}

int HierarchyConfig::required_history() const {
  int h = 1;
  for (const auto& l : layers) h = std::max(h, l.span());
  return h;
}

AttentionSpec HierarchyConfig::attention_spec() const {
  AttentionSpec spec;
  spec.dim = embed_dim;
  spec.heads = head_count;
  spec.prefix = "attn.";
  return spec;
}

std::vector<ConsensusLayer> make_consensus_layers(const HierarchyConfig& cfg,
                                                  int obs_dim, Rng& rng) {
  cfg.validate();
  std::vector<ConsensusLayer> out;
  for (std::size_t m = 0; m < cfg.layers.size(); ++m) {
    ConsensusLayer layer;
    layer.spec = cfg.layers[m];
    layer.cfg = cfg.consensus[m];
    layer.cfg.input_dim = layer.spec.window * obs_dim;
    Rng layer_rng = rng.split("layer" + std::to_string(m));
    layer.head = ConsensusHead::create(layer.cfg, layer_rng);
    layer.optimizer = AdamState(layer.cfg.learning_rate);
    out.push_back(std::move(layer));
  }
  return out;
}

std::vector<ConsensusCategory> layer_consensus(
    const std::vector<ConsensusLayer>& layers,
    const std::vector<RowVector>& inputs) {
  if (inputs.size() != layers.size()) {
    throw std::invalid_argument("layer_consensus: need one input per layer");
  }
  std::vector<ConsensusCategory> out;
  out.reserve(layers.size());
  for (std::size_t m = 0; m < layers.size(); ++m) {
    out.push_back(consensus_category(layers[m].head, inputs[m], layers[m].cfg));
  }
  return out;
}

ParameterSet make_aggregator(const HierarchyConfig& cfg, Rng& rng) {
  cfg.validate();
  ParameterSet params;
  const int d = cfg.embed_dim;
  for (std::size_t m = 0; m < cfg.layers.size(); ++m) {
    Matrix table(cfg.consensus[m].categories, d);
    for (Index i = 0; i < table.size(); ++i) table.data()[i] = cfg.embed_init_scale * rng.normal();
    params.add("emb." + std::to_string(m), std::move(table));
  }
  Matrix pos(cfg.layer_count(), d);
  for (Index i = 0; i < pos.size(); ++i) pos.data()[i] = 0.1 * rng.normal();
  params.add("pos", std::move(pos));
  init_attention(params, cfg.attention_spec(), rng);
  return params;
}

namespace {

struct TupleOutput {
  Tensor pooled;
  RowVector layer_weights;
  std::vector<Matrix> head_weights;
};

TupleOutput attend_tuple(const ParameterSet& agg, const std::vector<int>& cats,
                         const HierarchyConfig& cfg) {
  if (cats.size() != cfg.layers.size()) {
    throw std::invalid_argument("aggregate_attention: got " +
                                std::to_string(cats.size()) +
                                " categories for " +
                                std::to_string(cfg.layers.size()) + " layers");
  }
  std::vector<Tensor> rows;
  rows.reserve(cats.size());
  for (std::size_t m = 0; m < cats.size(); ++m) {
    const int k = cfg.consensus[m].categories;
    if (cats[m] < 0 || cats[m] >= k) {
      throw std::out_of_range("aggregate_attention: category " +
                              std::to_string(cats[m]) + " outside [0, " +
                              std::to_string(k) + ") for layer " +
                              std::to_string(m));
    }
    const Index idx = cats[m];
    rows.push_back(gather_rows(agg.at("emb." + std::to_string(m)),
                               std::span<const Index>(&idx, 1)));
  }
  Tensor tokens = add(concat_rows(rows), agg.at("pos"));
  AttentionResult attn =
      multi_head_attention(agg, tokens, cfg.attention_spec());
  TupleOutput out;
  out.pooled = mean_rows(attn.output);
  out.layer_weights = RowVector::Zero(cfg.layer_count());
  for (const auto& w : attn.weights) out.layer_weights += w.colwise().mean();
  out.layer_weights /= static_cast<double>(attn.weights.size());
  out.head_weights = std::move(attn.weights);
  return out;
}

}  // namespace

AggregateResult aggregate_attention(const ParameterSet& agg_params,
                                    const std::vector<ConsensusCategory>& cats,
                                    const HierarchyConfig& cfg) {
  std::vector<int> tuple;
  tuple.reserve(cats.size());
  for (auto c : cats) tuple.push_back(c.index);
  TupleOutput t = attend_tuple(agg_params, tuple, cfg);
  return {t.pooled, t.layer_weights, std::move(t.head_weights)};
}

AggregateResult aggregate_attention_batch(
    const ParameterSet& agg_params,
    const std::vector<std::vector<int>>& tuples, const HierarchyConfig& cfg) {
  if (tuples.empty()) {
    throw std::invalid_argument("aggregate_attention_batch: no rows");
  }
  std::map<std::vector<int>, Index> unique;
  std::vector<Index> row_to_unique;
  row_to_unique.reserve(tuples.size());
  std::vector<Tensor> pooled;
  std::vector<RowVector> weights;
  for (const auto& t : tuples) {
    auto [it, inserted] =
        unique.emplace(t, static_cast<Index>(pooled.size()));
    if (inserted) {
      TupleOutput out = attend_tuple(agg_params, t, cfg);
      pooled.push_back(out.pooled);
      weights.push_back(out.layer_weights);
    }
    row_to_unique.push_back(it->second);
  }
  AggregateResult result;
  result.consensus = gather_rows(concat_rows(pooled), row_to_unique);
  result.layer_weights = RowVector::Zero(cfg.layer_count());
  for (Index u : row_to_unique) result.layer_weights += weights[u];
  result.layer_weights /= static_cast<double>(row_to_unique.size());
  return result;
}

int ConsensusBatch::groups() const {
  return group_size > 0 ? static_cast<int>(keys.size()) / group_size : 0;
}

void ConsensusBatch::validate(int layer_count) const {
  if (group_size < 1) {
    throw std::invalid_argument("consensus batch: group size must be >= 1");
  }
  if (static_cast<int>(layer_inputs.size()) != layer_count) {
    throw std::invalid_argument("consensus batch: need inputs for every layer");
  }
  if (keys.empty() || keys.size() % group_size != 0) {
    throw std::invalid_argument(
        "consensus batch: rows are not a whole number of agent groups");
  }
  for (const auto& m : layer_inputs) {
    if (m.rows() != static_cast<Index>(keys.size())) {
      throw std::invalid_argument(
          "consensus batch: layer input rows do not match keys");
    }
  }
  for (std::size_t g = 0; g < keys.size(); g += group_size) {
    for (int r = 1; r < group_size; ++r) {
      if (!(keys[g + r] == keys[g])) {
        throw std::invalid_argument(
            "consensus batch: group starting at row " + std::to_string(g) +
            " mixes timesteps or environment instances");
      }
    }
  }
}

std::vector<double> hierarchy_train_step(std::vector<ConsensusLayer>& layers,
                                         const ConsensusBatch& batch,
                                         int minibatch_groups, int epochs,
                                         Rng& rng) {
  batch.validate(static_cast<int>(layers.size()));
  const int groups = batch.groups();
  const int n = batch.group_size;
  const int mb = minibatch_groups > 0 ? std::min(minibatch_groups, groups)
                                      : groups;
  std::vector<double> losses(layers.size(), 0.0);
  for (std::size_t m = 0; m < layers.size(); ++m) {
    ConsensusLayer& layer = layers[m];
    const Matrix& inputs = batch.layer_inputs[m];
    double total = 0.0;
    int count = 0;
    for (int e = 0; e < std::max(1, epochs); ++e) {
      std::vector<int> order(static_cast<std::size_t>(groups));
      std::iota(order.begin(), order.end(), 0);
      if (mb < groups) {
        for (int i = groups - 1; i > 0; --i) {
          std::swap(order[i], order[rng.uniform_int(i + 1)]);
        }
      }
      for (int start = 0; start < groups; start += mb) {
        const int size = std::min(mb, groups - start);
        Matrix x(static_cast<Index>(size) * n, inputs.cols());
        for (int g = 0; g < size; ++g) {
          x.middleRows(static_cast<Index>(g) * n, n) =
              inputs.middleRows(static_cast<Index>(order[start + g]) * n, n);
        }
        Matrix t_logits;
        Tensor loss =
            consensus_loss_grouped(layer.head, x, n, layer.cfg, &t_logits);
        total += loss.item();
        ++count;
        backward(loss);
        adam_step(layer.optimizer, layer.head.student);
        update_teacher(layer.head, layer.cfg, t_logits);
      }
    }
    losses[m] = total / static_cast<double>(count);
  }
  return losses;
}

}  // namespace hcmarl
