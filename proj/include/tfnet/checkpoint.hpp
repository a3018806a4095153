#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tfnet/layers.hpp"

namespace tfnet {

// "TFCK" container, little-endian:
//   magic, u32 version (1), u64 seed, u64 step,
//   u64 n + n bytes of JSON metadata,
//   u64 tensor count, then per tensor: u32 n + name, u32 rank, u64 dims[rank],
//   f64 values row-major.
struct Checkpoint {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Parameters followed by buffers, by name.
Checkpoint capture(const std::vector<nn::Parameter*>& parameters, const std::vector<nn::Parameter*>& buffers);
// Copies every named tensor into the matching parameter or buffer; missing
// names or shape differences throw DataError.
void restore(const Checkpoint& ckpt, const std::vector<nn::Parameter*>& parameters,
             const std::vector<nn::Parameter*>& buffers);

}  // namespace tfnet
