#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prouter/numerics/tensor.hpp"

namespace prouter {

inline constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Text header (version, dims, seed, metadata, tensor manifest) followed by a
// little-endian float64 payload in manifest order.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, long long>> dims;
  std::vector<std::pair<std::string, std::string>> meta;  // single-line values
  std::vector<NamedTensor> tensors;

  [[nodiscard]] long long dim(const std::string& key) const;
  [[nodiscard]] std::string meta_value(const std::string& key, const std::string& fallback = {}) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);

// Hex FNV-1a digest of the file bytes.
[[nodiscard]] std::string file_digest(const std::filesystem::path& path);

}  // namespace prouter
