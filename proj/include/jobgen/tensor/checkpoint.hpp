#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "jobgen/tensor/optimizer.hpp"
#include "jobgen/tensor/tensor.hpp"

namespace jobgen::tensor {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// On-disk layout (little-endian):
//   8-byte magic "JGCKPT01", u32 version,
//   u32 length + role tag, u32 length + metadata JSON,
//   u32 tensor count, then per tensor: u32 length + name, u32 rank,
//   u64 dims[rank], f64 values in row-major order.
struct Checkpoint {
  std::string role;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
  void add_store(const ParameterStore& store, const std::string& prefix = "");
  // Copies tensors named prefix+param into the store; every parameter must be
  // present with a matching shape.
  void load_store(ParameterStore& store, const std::string& prefix = "") const;
};

// Writes through a temporary file and renames, so readers never see a torn file.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws MissingPrerequisite when the file does not exist.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Optimizer moments travel as "opt.m.<param>" / "opt.v.<param>" tensors, the
// step count and learning rate in the metadata.
void add_optimizer_state(Checkpoint& ckpt, const OptimizerState& state);
bool has_optimizer_state(const Checkpoint& ckpt);
OptimizerState read_optimizer_state(const Checkpoint& ckpt);

}  // namespace jobgen::tensor
