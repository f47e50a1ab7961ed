#ifndef HCMARL_CONFIG_HPP_
#define HCMARL_CONFIG_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcmarl/envs.hpp"
#include "hcmarl/hierarchy.hpp"
#include "hcmarl/marl.hpp"

namespace hcmarl {

// A bad config key or value. key() is the dotted key at fault.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  EnvConfig env;
  TrainConfig train;
  HierarchyConfig hierarchy;
  std::vector<std::uint64_t> seeds = {1};
  int iterations = 100;
  std::string output_dir;  // empty: --out, then $HCMARL_OUT, then ./runs
  std::string label = "hcmarl";
  int checkpoint_every = 0;  // 0: final checkpoint only

  void validate() const;
};

// Flat "dotted.key = value" text. '#' starts a comment, blank lines are
// skipped. Sections:
//   run.*        seeds, iterations, output_dir, label, checkpoint_every
//   env.*        task, agents and the world constants
//   train.*      trainer settings
//   hierarchy.*  windows, strides (comma lists), embed_dim, heads
//   consensus.*  applied to every layer; consensus.<i>.* for layer i only
// Unknown keys, duplicate keys and bad values throw ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Every key with its value, one per line, in a fixed order; doubles are
// printed round-trip exact, so parse_config(config_echo(c)) reproduces c.
std::string config_echo(const RunConfig& cfg);

// Applies one key=value override on top of an existing config.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace hcmarl

#endif  // HCMARL_CONFIG_HPP_
