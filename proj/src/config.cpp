#include "hcmarl/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace hcmarl {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end || text.empty())
    throw ConfigError(key, "cannot parse '" + text + "' as a number");
  return v;
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

std::vector<int> parse_ints(const std::string& key, const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_number<int>(key, item));
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// A key bound to one field of T, with parsing, printing and a range check.
template <typename Owner>
struct Field {
  std::string key;
  std::function<void(Owner&, const std::string& key, const std::string&)> set;
  std::function<std::string(const Owner&)> get;
};

template <typename Owner>
using Fields = std::vector<Field<Owner>>;

template <typename Owner, typename Get>
void add_int(Fields<Owner>& f, std::string key, Get ref, int lo) {
  f.push_back({std::move(key),
               [ref, lo](Owner& o, const std::string& k, const std::string& v) {
                 const int x = parse_number<int>(k, v);
                 if (x < lo) throw ConfigError(k, "must be >= " + std::to_string(lo));
                 ref(o) = x;
               },
               [ref](const Owner& o) { return std::to_string(ref(const_cast<Owner&>(o))); }});
}

enum class Range { kPositive, kNonNegative, kUnitClosed, kUnitOpen, kUnitHalfOpen, kAny };

void check_range(const std::string& k, double x, Range r) {
  bool ok = std::isfinite(x);
  const char* what = "must be finite";
  switch (r) {
    case Range::kPositive: ok = ok && x > 0; what = "must be > 0"; break;
    case Range::kNonNegative: ok = ok && x >= 0; what = "must be >= 0"; break;
    case Range::kUnitClosed: ok = ok && x >= 0 && x <= 1; what = "must be in [0, 1]"; break;
    case Range::kUnitOpen: ok = ok && x > 0 && x < 1; what = "must be in (0, 1)"; break;
    case Range::kUnitHalfOpen: ok = ok && x >= 0 && x < 1; what = "must be in [0, 1)"; break;
    case Range::kAny: break;
  }
  if (!ok) throw ConfigError(k, what);
}

template <typename Owner, typename Get>
void add_double(Fields<Owner>& f, std::string key, Get ref, Range r) {
  f.push_back({std::move(key),
               [ref, r](Owner& o, const std::string& k, const std::string& v) {
                 const double x = parse_number<double>(k, v);
                 check_range(k, x, r);
                 ref(o) = x;
               },
               [ref](const Owner& o) { return fmt(ref(const_cast<Owner&>(o))); }});
}

template <typename Owner, typename Get>
void add_bool(Fields<Owner>& f, std::string key, Get ref) {
  f.push_back({std::move(key),
               [ref](Owner& o, const std::string& k, const std::string& v) {
                 ref(o) = parse_bool(k, v);
               },
               [ref](const Owner& o) {
                 return std::string(ref(const_cast<Owner&>(o)) ? "true" : "false");
               }});
}

template <typename Owner, typename Get>
void add_widths(Fields<Owner>& f, std::string key, Get ref) {
  f.push_back({std::move(key),
               [ref](Owner& o, const std::string& k, const std::string& v) {
                 auto w = parse_ints(k, v);
                 for (int x : w)
                   if (x < 1) throw ConfigError(k, "widths must be >= 1");
                 ref(o) = w;
               },
               [ref](const Owner& o) { return join(ref(const_cast<Owner&>(o))); }});
}

const Fields<ConsensusConfig>& consensus_fields() {
  static const Fields<ConsensusConfig> f = [] {
    Fields<ConsensusConfig> f;
    add_int(f, "categories", [](ConsensusConfig& c) -> int& { return c.categories; }, 1);
    add_double(f, "student_temperature",
               [](ConsensusConfig& c) -> double& { return c.student_temperature; },
               Range::kPositive);
    add_double(f, "teacher_temperature",
               [](ConsensusConfig& c) -> double& { return c.teacher_temperature; },
               Range::kPositive);
    add_double(f, "ema_momentum",
               [](ConsensusConfig& c) -> double& { return c.ema_momentum; }, Range::kUnitClosed);
    add_double(f, "center_momentum",
               [](ConsensusConfig& c) -> double& { return c.center_momentum; },
               Range::kUnitClosed);
    add_widths(f, "encoder_widths",
               [](ConsensusConfig& c) -> std::vector<int>& { return c.encoder_widths; });
    add_double(f, "learning_rate",
               [](ConsensusConfig& c) -> double& { return c.learning_rate; }, Range::kNonNegative);
    add_bool(f, "include_self_pairs",
             [](ConsensusConfig& c) -> bool& { return c.include_self_pairs; });
    return f;
  }();
  return f;
}

const Fields<RunConfig>& run_fields() {
  static const Fields<RunConfig> f = [] {
    Fields<RunConfig> f;
    using R = RunConfig;
    f.push_back({"run.seeds",
                 [](R& c, const std::string& k, const std::string& v) {
                   try {
                     c.seeds = parse_seed_list(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(k, e.what());
                   }
                 },
                 [](const R& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.seeds.size(); ++i)
                     s += (i ? "," : "") + std::to_string(c.seeds[i]);
                   return s;
                 }});
    add_int(f, "run.iterations", [](R& c) -> int& { return c.iterations; }, 0);
    f.push_back({"run.output_dir",
                 [](R& c, const std::string&, const std::string& v) { c.output_dir = v; },
                 [](const R& c) { return c.output_dir; }});
    f.push_back({"run.label",
                 [](R& c, const std::string& k, const std::string& v) {
                   if (v.empty() || v.find_first_of(" \t,=") != std::string::npos)
                     throw ConfigError(k, "must be non-empty without spaces, commas or '='");
                   c.label = v;
                 },
                 [](const R& c) { return c.label; }});
    add_int(f, "run.checkpoint_every", [](R& c) -> int& { return c.checkpoint_every; }, 0);

    f.push_back({"env.task",
                 [](R& c, const std::string& k, const std::string& v) {
                   try {
                     c.env.task = parse_task(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(k, e.what());
                   }
                 },
                 [](const R& c) { return to_string(c.env.task); }});
    add_int(f, "env.agents", [](R& c) -> int& { return c.env.agents; }, 1);
    add_double(f, "env.arena", [](R& c) -> double& { return c.env.arena; }, Range::kPositive);
    add_int(f, "env.step_limit", [](R& c) -> int& { return c.env.step_limit; }, 1);
    add_double(f, "env.speed_cap", [](R& c) -> double& { return c.env.speed_cap; },
               Range::kPositive);
    add_double(f, "env.sensing_radius", [](R& c) -> double& { return c.env.sensing_radius; },
               Range::kNonNegative);
    add_int(f, "env.nearest", [](R& c) -> int& { return c.env.nearest; }, 0);
    add_double(f, "env.min_separation", [](R& c) -> double& { return c.env.min_separation; },
               Range::kNonNegative);
    add_int(f, "env.placement_retries", [](R& c) -> int& { return c.env.placement_retries; }, 1);
    add_double(f, "env.success_bonus", [](R& c) -> double& { return c.env.success_bonus; },
               Range::kAny);
    add_double(f, "env.gather_radius", [](R& c) -> double& { return c.env.gather_radius; },
               Range::kPositive);
    add_double(f, "env.capture_radius", [](R& c) -> double& { return c.env.capture_radius; },
               Range::kPositive);
    add_double(f, "env.prey_speed_factor",
               [](R& c) -> double& { return c.env.prey_speed_factor; }, Range::kNonNegative);
    add_int(f, "env.prey_turn_interval", [](R& c) -> int& { return c.env.prey_turn_interval; },
            1);
    add_double(f, "env.goal_radius", [](R& c) -> double& { return c.env.goal_radius; },
               Range::kPositive);
    add_double(f, "env.obstacle_radius", [](R& c) -> double& { return c.env.obstacle_radius; },
               Range::kNonNegative);
    add_double(f, "env.agent_radius", [](R& c) -> double& { return c.env.agent_radius; },
               Range::kNonNegative);
    add_double(f, "env.collision_penalty",
               [](R& c) -> double& { return c.env.collision_penalty; }, Range::kNonNegative);

    add_double(f, "train.gamma", [](R& c) -> double& { return c.train.gamma; },
               Range::kUnitOpen);
    add_double(f, "train.gae_lambda", [](R& c) -> double& { return c.train.gae_lambda; },
               Range::kUnitClosed);
    add_double(f, "train.clip", [](R& c) -> double& { return c.train.clip; }, Range::kPositive);
    add_int(f, "train.epochs", [](R& c) -> int& { return c.train.epochs; }, 1);
    add_int(f, "train.minibatch_size", [](R& c) -> int& { return c.train.minibatch_size; }, 1);
    add_int(f, "train.rollout_episodes", [](R& c) -> int& { return c.train.rollout_episodes; },
            1);
    add_int(f, "train.instances", [](R& c) -> int& { return c.train.instances; }, 1);
    add_double(f, "train.actor_lr", [](R& c) -> double& { return c.train.actor_lr; },
               Range::kNonNegative);
    add_double(f, "train.critic_lr", [](R& c) -> double& { return c.train.critic_lr; },
               Range::kNonNegative);
    add_double(f, "train.entropy_coef", [](R& c) -> double& { return c.train.entropy_coef; },
               Range::kNonNegative);
    add_double(f, "train.max_grad_norm", [](R& c) -> double& { return c.train.max_grad_norm; },
               Range::kAny);
    add_double(f, "train.reward_scale", [](R& c) -> double& { return c.train.reward_scale; },
               Range::kPositive);
    add_bool(f, "train.consensus_enabled",
             [](R& c) -> bool& { return c.train.consensus_enabled; });
    add_bool(f, "train.literal_pg", [](R& c) -> bool& { return c.train.literal_pg; });
    add_bool(f, "train.target_critic", [](R& c) -> bool& { return c.train.target_critic; });
    add_double(f, "train.target_momentum",
               [](R& c) -> double& { return c.train.target_momentum; }, Range::kUnitClosed);
    add_bool(f, "train.share_parameters",
             [](R& c) -> bool& { return c.train.share_parameters; });
    add_bool(f, "train.normalize_advantages",
             [](R& c) -> bool& { return c.train.normalize_advantages; });
    add_widths(f, "train.actor_widths",
               [](R& c) -> std::vector<int>& { return c.train.actor_widths; });
    add_widths(f, "train.critic_widths",
               [](R& c) -> std::vector<int>& { return c.train.critic_widths; });
    f.push_back({"train.activation",
                 [](R& c, const std::string& k, const std::string& v) {
                   try {
                     c.train.activation = parse_activation(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(k, e.what());
                   }
                 },
                 [](const R& c) { return to_string(c.train.activation); }});
    add_int(f, "train.consensus_epochs", [](R& c) -> int& { return c.train.consensus_epochs; },
            1);
    add_int(f, "train.consensus_minibatch_groups",
            [](R& c) -> int& { return c.train.consensus_minibatch_groups; }, 1);
    add_int(f, "train.pretrain_steps", [](R& c) -> int& { return c.train.pretrain_steps; }, 0);

    // windows resizes the layer list; new layers inherit the last layer's
    // consensus settings.
    f.push_back({"hierarchy.windows",
                 [](R& c, const std::string& k, const std::string& v) {
                   auto w = parse_ints(k, v);
                   if (w.empty()) throw ConfigError(k, "at least one layer is required");
                   for (int x : w)
                     if (x < 1) throw ConfigError(k, "windows must be >= 1");
                   auto& h = c.hierarchy;
                   const ConsensusConfig tail =
                       h.consensus.empty() ? ConsensusConfig{} : h.consensus.back();
                   h.layers.resize(w.size());
                   h.consensus.resize(w.size(), tail);
                   for (std::size_t i = 0; i < w.size(); ++i) h.layers[i].window = w[i];
                 },
                 [](const R& c) {
                   std::vector<int> w;
                   for (const auto& l : c.hierarchy.layers) w.push_back(l.window);
                   return join(w);
                 }});
    f.push_back({"hierarchy.strides",
                 [](R& c, const std::string& k, const std::string& v) {
                   auto s = parse_ints(k, v);
                   if (s.size() != c.hierarchy.layers.size())
                     throw ConfigError(k, "needs one stride per window (" +
                                              std::to_string(c.hierarchy.layers.size()) + ")");
                   for (int x : s)
                     if (x < 1) throw ConfigError(k, "strides must be >= 1");
                   for (std::size_t i = 0; i < s.size(); ++i) c.hierarchy.layers[i].stride = s[i];
                 },
                 [](const R& c) {
                   std::vector<int> s;
                   for (const auto& l : c.hierarchy.layers) s.push_back(l.stride);
                   return join(s);
                 }});
    add_int(f, "hierarchy.embed_dim", [](R& c) -> int& { return c.hierarchy.embed_dim; }, 1);
    add_int(f, "hierarchy.heads", [](R& c) -> int& { return c.hierarchy.head_count; }, 1);
    add_double(f, "hierarchy.embed_init_scale",
               [](R& c) -> double& { return c.hierarchy.embed_init_scale; }, Range::kPositive);
    return f;
  }();
  return f;
}

const Field<RunConfig>* find_run_field(const std::string& key) {
  for (const auto& f : run_fields())
    if (f.key == key) return &f;
  return nullptr;
}

const Field<ConsensusConfig>* find_consensus_field(const std::string& name) {
  for (const auto& f : consensus_fields())
    if (f.key == name) return &f;
  return nullptr;
}

// Order in which keys are applied, so that results do not depend on line
// order: the layer list first, then everything else, then consensus
// settings for all layers, then per-layer overrides.
int phase(const std::string& key) {
  if (key == "hierarchy.windows") return 0;
  if (key.rfind("consensus.", 0) != 0) return 1;
  const std::string rest = key.substr(10);
  return (!rest.empty() && std::isdigit(static_cast<unsigned char>(rest[0]))) ? 3 : 2;
}

void rethrow_validation(const std::string& section, const std::invalid_argument& e) {
  // Messages from the module validators start with the dotted key when they
  // know it.
  std::string msg = e.what();
  const auto space = msg.find(' ');
  const std::string head = msg.substr(0, space);
  if (head.rfind(section + ".", 0) == 0 && space != std::string::npos)
    throw ConfigError(head, msg.substr(space + 1));
  throw ConfigError(section, msg);
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(text, ',')) {
    std::uint64_t v = 0;
    const char* end = item.data() + item.size();
    auto [p, ec] = std::from_chars(item.data(), end, v);
    if (ec != std::errc() || p != end || item.empty())
      throw std::invalid_argument("bad seed '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("seed list is empty");
  return out;
}

void RunConfig::validate() const {
  if (seeds.empty()) throw ConfigError("run.seeds", "seed list is empty");
  if (iterations < 0) throw ConfigError("run.iterations", "must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("run.checkpoint_every", "must be >= 0");
  try {
    env.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_validation("env", e);
  }
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_validation("train", e);
  }
  if (hierarchy.consensus.size() != hierarchy.layers.size())
    throw ConfigError("hierarchy.windows", "consensus settings do not match the layer count");
  for (std::size_t i = 0; i < hierarchy.consensus.size(); ++i) {
    try {
      hierarchy.consensus[i].validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("consensus." + std::to_string(i), e.what());
    }
  }
  if (hierarchy.embed_dim % hierarchy.head_count != 0)
    throw ConfigError("hierarchy.heads", "must divide hierarchy.embed_dim");
  try {
    hierarchy.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_validation("hierarchy", e);
  }
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (const auto* f = find_run_field(key)) {
    f->set(cfg, key, value);
    return;
  }
  if (key.rfind("consensus.", 0) == 0) {
    std::string rest = key.substr(10);
    const auto dot = rest.find('.');
    if (dot != std::string::npos && dot > 0 &&
        std::all_of(rest.begin(), rest.begin() + dot,
                    [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
      const auto layer = static_cast<std::size_t>(std::stoul(rest.substr(0, dot)));
      const auto* f = find_consensus_field(rest.substr(dot + 1));
      if (!f) throw ConfigError(key, "unknown key");
      if (layer >= cfg.hierarchy.consensus.size())
        throw ConfigError(key, "layer index out of range (have " +
                                   std::to_string(cfg.hierarchy.consensus.size()) + " layers)");
      f->set(cfg.hierarchy.consensus[layer], key, value);
      return;
    }
    if (const auto* f = find_consensus_field(rest)) {
      for (auto& c : cfg.hierarchy.consensus) f->set(c, key, value);
      return;
    }
  }
  throw ConfigError(key, "unknown key");
}

RunConfig parse_config(const std::string& text) {
  struct Entry {
    std::string key, value;
    int line;
  };
  std::vector<Entry> entries;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (e.key.empty()) throw ConfigError("line " + std::to_string(line_no), "empty key");
    if (!seen.insert(e.key).second) throw ConfigError(e.key, "duplicate key");
    entries.push_back(std::move(e));
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return phase(a.key) < phase(b.key); });
  RunConfig cfg;
  for (const auto& e : entries) set_config_value(cfg, e.key, e.value);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_echo(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : run_fields()) out += f.key + " = " + f.get(cfg) + "\n";
  for (std::size_t i = 0; i < cfg.hierarchy.consensus.size(); ++i)
    for (const auto& f : consensus_fields())
      out += "consensus." + std::to_string(i) + "." + f.key + " = " +
             f.get(cfg.hierarchy.consensus[i]) + "\n";
  return out;
}

}  // namespace hcmarl
