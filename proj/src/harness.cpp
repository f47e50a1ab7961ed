#include "hcmarl/harness.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "hcmarl/checkpoint.hpp"

namespace hcmarl {
namespace fs = std::filesystem;

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::string kVersionLine = "format_version=" + std::to_string(kMetricsFormatVersion);
const std::string kCsvVersionLine = "# " + kVersionLine;

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / v.size();
}

// Sample standard deviation over sqrt(n); 0 for a single value.
double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / (v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

std::string csv_header(const MetricsRecord& r) {
  std::string s;
  for (std::size_t i = 0; i < r.keys.size(); ++i) s += (i ? "," : "") + r.keys[i];
  return s;
}

std::string csv_row(const MetricsRecord& r) {
  std::string s;
  for (std::size_t i = 0; i < r.values.size(); ++i) s += (i ? "," : "") + g17(r.values[i]);
  return s;
}

// Rewrites a seed's stream files from records, used on fresh starts and
// when a resume discards records past the checkpoint.
void rewrite_streams(const std::string& dir, const std::vector<MetricsRecord>& records,
                     const MetricsRecord& schema) {
  std::ofstream txt(dir + "/metrics.txt", std::ios::trunc);
  std::ofstream csv(dir + "/metrics.csv", std::ios::trunc);
  txt << kVersionLine << "\n";
  csv << kCsvVersionLine << "\n" << csv_header(schema) << "\n";
  for (const auto& r : records) {
    txt << format_record(r) << "\n";
    csv << csv_row(r) << "\n";
  }
  if (!txt || !csv) throw std::runtime_error("cannot write metrics in '" + dir + "'");
}

void rewrite_timing(const std::string& dir, const std::vector<std::pair<int, double>>& rows) {
  std::ofstream t(dir + "/timing.csv", std::ios::trunc);
  t << kCsvVersionLine << "\niteration,wall_clock_seconds\n";
  for (const auto& [it, s] : rows) t << it << "," << g17(s) << "\n";
}

std::vector<std::pair<int, double>> read_timing(const std::string& path, int up_to) {
  std::vector<std::pair<int, double>> rows;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'i') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    const int it = std::stoi(line.substr(0, comma));
    if (it <= up_to) rows.emplace_back(it, std::stod(line.substr(comma + 1)));
  }
  return rows;
}

MetricsRecord schema_for(const Trainer& tr) {
  IterationMetrics m;
  const auto layers = static_cast<std::size_t>(tr.hierarchy_config().layer_count());
  m.consensus_loss.assign(layers, 0.0);
  m.agreement_rate.assign(layers, 0.0);
  m.attention_weight.assign(layers, 0.0);
  return to_record(m);
}

}  // namespace

double MetricsRecord::get(const std::string& key) const {
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (keys[i] == key) return values[i];
  throw std::out_of_range("metrics record has no key '" + key + "'");
}

MetricsRecord to_record(const IterationMetrics& m) {
  MetricsRecord r;
  auto put = [&](std::string k, double v) {
    r.keys.push_back(std::move(k));
    r.values.push_back(v);
  };
  put("iteration", m.iteration);
  put("env_steps", static_cast<double>(m.env_steps));
  put("mean_episode_reward", m.mean_episode_reward);
  put("mean_steps_to_complete", m.mean_steps_to_complete);
  put("success_rate", m.success_rate);
  put("critic_loss", m.critic_loss);
  put("actor_objective", m.actor_objective);
  put("policy_entropy", m.policy_entropy);
  for (std::size_t l = 0; l < m.consensus_loss.size(); ++l) {
    const std::string s = std::to_string(l);
    put("consensus_loss." + s, m.consensus_loss[l]);
    put("agreement_rate." + s, m.agreement_rate[l]);
    put("attention_weight." + s, m.attention_weight[l]);
  }
  return r;
}

std::string format_record(const MetricsRecord& r) {
  std::string s;
  for (std::size_t i = 0; i < r.keys.size(); ++i)
    s += (i ? " " : "") + r.keys[i] + "=" + g17(r.values[i]);
  return s;
}

MetricsRecord parse_record(const std::string& line) {
  MetricsRecord r;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::runtime_error("malformed metrics field '" + tok + "'");
    r.keys.push_back(tok.substr(0, eq));
    const std::string v = tok.substr(eq + 1);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0') throw std::runtime_error("malformed metrics value '" + tok + "'");
    r.values.push_back(x);
  }
  return r;
}

std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kVersionLine)
    throw std::runtime_error("metrics file '" + path + "' does not start with " + kVersionLine);
  std::vector<MetricsRecord> out;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(parse_record(line));
  return out;
}

std::string resolve_output_root(const std::string& cli_out, const RunConfig& cfg) {
  if (!cli_out.empty()) return cli_out;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("HCMARL_OUT"); env && *env) return env;
  return "runs";
}

std::string run_directory(const std::string& root, std::size_t index, std::uint64_t seed) {
  return (fs::path(root) / ("run_" + std::to_string(index) + "_seed_" + std::to_string(seed)))
      .string();
}

std::vector<SeedRun> run_train(const RunConfig& cfg, const std::string& root,
                               const TrainOptions& options) {
  cfg.validate();
  fs::create_directories(root);
  {
    std::ofstream echo(fs::path(root) / "config.txt", std::ios::trunc);
    echo << kVersionLine << "\n" << config_echo(cfg);
  }
  std::vector<SeedRun> runs;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    SeedRun run;
    run.seed = cfg.seeds[i];
    run.directory = run_directory(root, i, run.seed);
    fs::create_directories(run.directory);
    const std::string ckpt = run.directory + "/checkpoint.bin";

    std::unique_ptr<Trainer> trainer;
    std::vector<std::pair<int, double>> timing;
    if (options.resume && fs::exists(ckpt)) {
      Checkpoint ck = load_checkpoint(ckpt);
      if (config_echo(ck.config) != config_echo(cfg) || ck.seed != run.seed)
        throw std::invalid_argument("checkpoint '" + ckpt +
                                    "' was written for a different config or seed");
      trainer = std::move(ck.trainer);
      for (auto& r : read_metrics(run.directory + "/metrics.txt"))
        if (r.get("iteration") <= trainer->iteration) run.records.push_back(std::move(r));
      timing = read_timing(run.directory + "/timing.csv", trainer->iteration);
    } else {
      trainer = std::make_unique<Trainer>(cfg.env, cfg.train, cfg.hierarchy, run.seed);
    }
    const MetricsRecord schema = schema_for(*trainer);
    rewrite_streams(run.directory, run.records, schema);
    rewrite_timing(run.directory, timing);

    std::ofstream txt(run.directory + "/metrics.txt", std::ios::app);
    std::ofstream csv(run.directory + "/metrics.csv", std::ios::app);
    std::ofstream tim(run.directory + "/timing.csv", std::ios::app);
    bool interrupted = false;
    while (trainer->iteration < cfg.iterations) {
      const IterationMetrics m = trainer->train_iteration();
      const MetricsRecord r = to_record(m);
      txt << format_record(r) << "\n" << std::flush;
      csv << csv_row(r) << "\n" << std::flush;
      tim << m.iteration << "," << g17(m.wall_clock_seconds) << "\n" << std::flush;
      run.records.push_back(r);
      if (options.on_iteration) options.on_iteration(cfg, i, *trainer, m);
      if (!options.quiet)
        std::cerr << "seed " << run.seed << " iteration " << m.iteration
                  << " reward=" << g17(m.mean_episode_reward)
                  << " steps=" << m.mean_steps_to_complete << "\n";
      if (cfg.checkpoint_every > 0 && m.iteration % cfg.checkpoint_every == 0)
        save_checkpoint(ckpt, *trainer, cfg, run.seed);
      if (options.stop_after >= 0 && m.iteration >= options.stop_after &&
          m.iteration < cfg.iterations) {
        interrupted = true;
        break;
      }
    }
    save_checkpoint(ckpt, *trainer, cfg, run.seed);
    run.complete = !interrupted;
    runs.push_back(std::move(run));
  }

  bool all_complete = true;
  for (const auto& r : runs) all_complete = all_complete && r.complete;
  if (all_complete) {
    std::vector<std::vector<MetricsRecord>> from_files;
    for (const auto& r : runs) from_files.push_back(read_metrics(r.directory + "/metrics.txt"));
    std::ofstream agg(fs::path(root) / "aggregate.csv", std::ios::trunc);
    agg << aggregate_csv(cfg.label, from_files);
  }
  return runs;
}

std::string aggregate_csv(const std::string& label,
                          const std::vector<std::vector<MetricsRecord>>& runs) {
  std::string out = kCsvVersionLine + "\n";
  std::size_t rows = std::numeric_limits<std::size_t>::max();
  for (const auto& r : runs) rows = std::min(rows, r.size());
  if (runs.empty()) rows = 0;
  std::vector<std::string> keys;
  if (rows > 0) keys = runs[0][0].keys;
  out += "variant,iteration,seeds";
  for (std::size_t k = 1; k < keys.size(); ++k) out += "," + keys[k] + "_mean," + keys[k] + "_stderr";
  out += "\n";
  for (std::size_t t = 0; t < rows; ++t) {
    out += label + "," + g17(runs[0][t].values[0]) + "," + std::to_string(runs.size());
    for (std::size_t k = 1; k < keys.size(); ++k) {
      std::vector<double> v;
      for (const auto& r : runs) v.push_back(r[t].values[k]);
      out += "," + g17(mean_of(v)) + "," + g17(stderr_of(v));
    }
    out += "\n";
  }
  return out;
}

EvalReport run_eval(const std::string& checkpoint_path, int episodes, bool greedy) {
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  Checkpoint ck = load_checkpoint(checkpoint_path);
  Rng rng(ck.seed, "eval");
  const auto results = ck.trainer->evaluate(episodes, greedy, rng);
  std::vector<double> steps, rewards;
  double successes = 0.0;
  for (const auto& e : results) {
    steps.push_back(e.steps_to_complete);
    rewards.push_back(e.total_reward);
    successes += e.success ? 1.0 : 0.0;
  }
  EvalReport r;
  r.episodes = episodes;
  r.greedy = greedy;
  r.mean_steps = mean_of(steps);
  r.stderr_steps = stderr_of(steps);
  r.success_rate = successes / episodes;
  r.mean_reward = mean_of(rewards);
  r.stderr_reward = stderr_of(rewards);
  return r;
}

std::string format_eval(const EvalReport& r) {
  return kVersionLine + " episodes=" + std::to_string(r.episodes) +
         " greedy=" + (r.greedy ? "true" : "false") + " mean_steps_to_complete=" +
         g17(r.mean_steps) + " stderr_steps_to_complete=" + g17(r.stderr_steps) +
         " success_rate=" + g17(r.success_rate) + " mean_episode_reward=" + g17(r.mean_reward) +
         " stderr_episode_reward=" + g17(r.stderr_reward);
}

double final_window_mean(const std::vector<MetricsRecord>& records, const std::string& key) {
  if (records.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t w = std::max<std::size_t>(1, (records.size() + 9) / 10);
  std::vector<double> v;
  for (std::size_t i = records.size() - w; i < records.size(); ++i) v.push_back(records[i].get(key));
  return mean_of(v);
}

RunConfig ablation_config(const RunConfig& base, const std::string& axis, int value) {
  if (value < 1) throw std::invalid_argument("sweep values must be >= 1");
  RunConfig cfg = base;
  if (axis == "k") {
    for (auto& c : cfg.hierarchy.consensus) c.categories = value;
  } else if (axis == "m") {
    const ConsensusConfig c =
        base.hierarchy.consensus.empty() ? ConsensusConfig{} : base.hierarchy.consensus.back();
    cfg.hierarchy.layers = {LayerSpec{value, 1}};
    cfg.hierarchy.consensus = {c};
  } else {
    throw std::invalid_argument("unknown ablation axis '" + axis + "' (expected k or m)");
  }
  cfg.label = base.label + "_" + axis + std::to_string(value);
  cfg.validate();
  return cfg;
}

std::vector<SweepRow> run_ablation(const RunConfig& base, const std::string& axis,
                                   const std::vector<int>& values, const std::string& root,
                                   const TrainOptions& options) {
  if (values.empty()) throw std::invalid_argument("sweep value list is empty");
  std::vector<RunConfig> configs;
  for (int v : values) configs.push_back(ablation_config(base, axis, v));
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::string dir = (fs::path(root) / (axis + "_" + std::to_string(values[i]))).string();
    for (const auto& run : run_train(configs[i], dir, options)) {
      SweepRow row;
      row.axis = axis;
      row.value = values[i];
      row.seed = run.seed;
      row.final_reward = final_window_mean(run.records, "mean_episode_reward");
      row.final_steps = final_window_mean(run.records, "mean_steps_to_complete");
      row.final_success = final_window_mean(run.records, "success_rate");
      rows.push_back(row);
    }
  }
  std::ofstream out(fs::path(root) / ("sweep_" + axis + ".csv"), std::ios::trunc);
  out << kCsvVersionLine << "\naxis,value,seed,final_mean_episode_reward,"
      << "final_mean_steps_to_complete,final_success_rate\n";
  for (const auto& r : rows)
    out << r.axis << "," << r.value << "," << r.seed << "," << g17(r.final_reward) << ","
        << g17(r.final_steps) << "," << g17(r.final_success) << "\n";
  if (!out) throw std::runtime_error("cannot write sweep summary under '" + root + "'");
  return rows;
}

}  // namespace hcmarl
