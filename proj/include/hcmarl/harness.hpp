#ifndef HCMARL_HARNESS_HPP_
#define HCMARL_HARNESS_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hcmarl/config.hpp"
#include "hcmarl/marl.hpp"

namespace hcmarl {

inline constexpr int kMetricsFormatVersion = 1;

// One metrics record: keys in a fixed order, the same set on every line of
// a run.
struct MetricsRecord {
  std::vector<std::string> keys;
  std::vector<double> values;

  double get(const std::string& key) const;  // throws std::out_of_range
};

MetricsRecord to_record(const IterationMetrics& m);
// "key=value key=value ...", values printed with %.17g.
std::string format_record(const MetricsRecord& r);
MetricsRecord parse_record(const std::string& line);
// Reads a metrics.txt stream; throws std::runtime_error on a missing or
// unsupported format_version line.
std::vector<MetricsRecord> read_metrics(const std::string& path);

// Explicit --out, then the config's run.output_dir, then $HCMARL_OUT, then
// "runs".
std::string resolve_output_root(const std::string& cli_out, const RunConfig& cfg);

std::string run_directory(const std::string& root, std::size_t index, std::uint64_t seed);

struct TrainOptions {
  // Continue from each seed's checkpoint.bin when present.
  bool resume = false;
  // Stop every seed once it reaches this iteration, after writing its
  // checkpoint, as if the process had been interrupted. < 0 disables.
  int stop_after = -1;
  std::function<void(const RunConfig&, std::size_t seed_index, const Trainer&,
                     const IterationMetrics&)>
      on_iteration;
  bool quiet = true;  // progress lines on stderr when false
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::string directory;
  std::vector<MetricsRecord> records;  // the full stream as written
  bool complete = false;
};

// Per seed: <root>/run_<i>_seed_<s>/{metrics.txt, metrics.csv, timing.csv,
// checkpoint.bin}. Once every seed is complete, <root>/aggregate.csv holds
// the per-iteration mean and standard error across seeds, recomputed from
// the metrics files. <root>/config.txt echoes the config.
std::vector<SeedRun> run_train(const RunConfig& cfg, const std::string& root,
                               const TrainOptions& options = {});

// Aggregates per-seed metrics streams into plot-ready CSV rows.
std::string aggregate_csv(const std::string& label,
                          const std::vector<std::vector<MetricsRecord>>& runs);

struct EvalReport {
  int episodes = 0;
  bool greedy = true;
  double mean_steps = 0.0;
  double stderr_steps = 0.0;
  double success_rate = 0.0;
  double mean_reward = 0.0;
  double stderr_reward = 0.0;
};

// Rolls out the checkpoint's policy for `episodes` fresh episodes drawn from
// the "eval" stream of its seed. episodes < 1 throws std::invalid_argument.
EvalReport run_eval(const std::string& checkpoint_path, int episodes, bool greedy);
std::string format_eval(const EvalReport& r);

struct SweepRow {
  std::string axis;
  int value = 0;
  std::uint64_t seed = 0;
  double final_reward = 0.0;   // mean over the last 10% of iterations
  double final_steps = 0.0;
  double final_success = 0.0;
};

// Mean of `key` over the last ceil(10%) of the records (NaN when empty).
double final_window_mean(const std::vector<MetricsRecord>& records, const std::string& key);

// The config used for one sweep value. Axis "k" sets every layer's category
// count; axis "m" replaces the hierarchy with one layer of window m and
// stride 1.
RunConfig ablation_config(const RunConfig& base, const std::string& axis, int value);

// One run_train per value under <root>/<axis>_<value>/, then
// <root>/sweep_<axis>.csv with one row per value and seed.
std::vector<SweepRow> run_ablation(const RunConfig& base, const std::string& axis,
                                   const std::vector<int>& values, const std::string& root,
                                   const TrainOptions& options = {});

}  // namespace hcmarl

#endif  // HCMARL_HARNESS_HPP_
