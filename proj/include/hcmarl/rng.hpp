#ifndef HCMARL_RNG_HPP_
#define HCMARL_RNG_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace hcmarl {

// Deterministic seed derivation: SplitMix64 finalizer over the root seed mixed
// with an FNV-1a hash of the stream name.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

// A named pseudo-random stream. Each subsystem (init, env, sampling, eval)
// owns one, all split from a single root seed, so the order in which
// subsystems draw never affects one another.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, std::string_view name)
      : engine_(derive_seed(root, name)) {}

  Rng split(std::string_view name);

  double uniform() { return unit_(engine_); }  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  int uniform_int(int n);  // [0, n)

  std::mt19937_64& engine() { return engine_; }

  // Text form of the full engine state, for checkpoints.
  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace hcmarl

#endif  // HCMARL_RNG_HPP_
