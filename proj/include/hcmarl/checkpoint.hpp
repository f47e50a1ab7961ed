#ifndef HCMARL_CHECKPOINT_HPP_
#define HCMARL_CHECKPOINT_HPP_

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include "hcmarl/config.hpp"
#include "hcmarl/marl.hpp"

namespace hcmarl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Truncated, corrupted or mismatched checkpoint data.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A well-formed checkpoint written by an incompatible format version.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File layout (little-endian):
//   "HCMARLCK" | u32 version | u32 section count
//   per section, sorted by name: u32 name length | name | u64 size | payload
//   u64 FNV-1a hash of every preceding byte
// Sections hold every parameter set, optimizer state and teacher center,
// the four RNG streams, counters, the seed and the canonical config echo.
std::string encode_checkpoint(const Trainer& trainer, const RunConfig& config,
                              std::uint64_t seed);

struct Checkpoint {
  RunConfig config;
  std::uint64_t seed = 0;
  std::unique_ptr<Trainer> trainer;
};
Checkpoint decode_checkpoint(const std::string& bytes);

// Writes through a temporary file and a rename, so an interrupted write
// never leaves a half-written checkpoint behind.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

void save_checkpoint(const std::string& path, const Trainer& trainer,
                     const RunConfig& config, std::uint64_t seed);
Checkpoint load_checkpoint(const std::string& path);

// Load, re-encode, byte-compare against the file.
bool checkpoint_roundtrips(const std::string& path);

}  // namespace hcmarl

#endif  // HCMARL_CHECKPOINT_HPP_
