// hcmarl: train, eval, ablate, verify-checkpoint.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "hcmarl/checkpoint.hpp"
#include "hcmarl/config.hpp"
#include "hcmarl/harness.hpp"

namespace {

using namespace hcmarl;

// One machine-parsable line on stderr per failure.
int fail(const std::string& cls, const std::string& message, const std::string& key = "") {
  std::string msg = message;
  for (auto& ch : msg)
    if (ch == '\n') ch = ' ';
  std::cerr << "error: class=" << cls;
  if (!key.empty()) std::cerr << " key=" << key;
  std::cerr << " message=\"" << msg << "\"\n";
  return cls == "usage" ? 2 : 1;
}

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::string seeds;
  std::vector<std::string> overrides;
  bool verbose = false;
};

RunConfig load(const Common& c, CLI::App* cmd) {
  RunConfig cfg = load_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(kv, "--set expects key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (cmd->count("--seed")) cfg.seeds = {c.seed};
  if (cmd->count("--seeds")) {
    try {
      cfg.seeds = parse_seed_list(c.seeds);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("--seeds", e.what());
    }
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "config file (dotted key = value lines)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output root (default: run.output_dir, $HCMARL_OUT, ./runs)");
  auto* seed = cmd->add_option("--seed", c.seed, "single seed, replaces run.seeds");
  cmd->add_option("--seeds", c.seeds, "comma-separated seeds, replaces run.seeds")->excludes(seed);
  cmd->add_option("--set", c.overrides, "key=value override, repeatable");
  cmd->add_flag("-v,--verbose", c.verbose, "progress on stderr");
}

int run(int argc, char** argv) {
  CLI::App app{"Hierarchical consensus multi-agent RL: training and evaluation harness"};
  app.require_subcommand(1);

  Common train_opts;
  bool resume = false;
  auto* train = app.add_subcommand("train", "train every seed, write metrics and checkpoints");
  add_common(train, train_opts);
  train->add_flag("--resume", resume, "continue each seed from its checkpoint.bin");

  std::string ckpt;
  int episodes = 0;
  bool greedy = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint,--checkpoint", ckpt, "checkpoint file")->required();
  eval->add_option("--episodes", episodes, "episode count")->required();
  eval->add_flag("--greedy", greedy, "argmax actions instead of sampling");

  Common ablate_opts;
  std::string axis;
  std::string values;
  auto* ablate = app.add_subcommand("ablate", "sweep category count k or window m");
  add_common(ablate, ablate_opts);
  ablate->add_option("--axis", axis, "k or m")->required()->check(CLI::IsMember({"k", "m"}));
  ablate->add_option("--values", values, "comma-separated values (default: k 1,4,8,16; m 1,3,5,10)");

  std::string verify_path;
  auto* verify = app.add_subcommand("verify-checkpoint", "load, re-save and byte-compare");
  verify->add_option("checkpoint,--checkpoint", verify_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (*train) {
      RunConfig cfg = load(train_opts, train);
      const std::string root = resolve_output_root(train_opts.out, cfg);
      TrainOptions opts;
      opts.resume = resume;
      opts.quiet = !train_opts.verbose;
      for (const auto& r : run_train(cfg, root, opts)) {
        const double reward = final_window_mean(r.records, "mean_episode_reward");
        std::cout << "seed=" << r.seed << " dir=" << r.directory
                  << " iterations=" << r.records.size() << " final_mean_episode_reward=" << reward
                  << "\n";
      }
      std::cout << "aggregate=" << (std::filesystem::path(root) / "aggregate.csv").string()
                << "\n";
    } else if (*eval) {
      std::cout << format_eval(run_eval(ckpt, episodes, greedy)) << "\n";
    } else if (*ablate) {
      RunConfig cfg = load(ablate_opts, ablate);
      std::vector<int> list;
      if (values.empty()) {
        list = axis == "k" ? std::vector<int>{1, 4, 8, 16} : std::vector<int>{1, 3, 5, 10};
      } else {
        try {
          for (auto s : parse_seed_list(values)) list.push_back(static_cast<int>(s));
        } catch (const std::invalid_argument& e) {
          throw ConfigError("--values", e.what());
        }
      }
      const std::string root = resolve_output_root(ablate_opts.out, cfg);
      TrainOptions opts;
      opts.quiet = !ablate_opts.verbose;
      for (const auto& r : run_ablation(cfg, axis, list, root, opts))
        std::cout << "axis=" << r.axis << " value=" << r.value << " seed=" << r.seed
                  << " final_mean_episode_reward=" << r.final_reward
                  << " final_mean_steps_to_complete=" << r.final_steps << "\n";
      std::cout << "summary=" << (std::filesystem::path(root) / ("sweep_" + axis + ".csv")).string()
                << "\n";
    } else if (*verify) {
      if (!checkpoint_roundtrips(verify_path))
        return fail("integrity", "re-encoded checkpoint differs from '" + verify_path + "'");
      std::cout << "ok " << verify_path << "\n";
    }
  } catch (const ConfigError& e) {
    return fail("config", e.what(), e.key());
  } catch (const IntegrityError& e) {
    return fail("integrity", e.what());
  } catch (const VersionError& e) {
    return fail("version", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", e.what());
  } catch (const std::invalid_argument& e) {
    return fail("input", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
