#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aligncap/config.hpp"
#include "aligncap/model.hpp"

// Binary checkpoint layout:
//   "ALCKPT01" | u64 LE manifest length | manifest JSON | float64 LE payload
// The manifest records the config, the step and, per parameter, its name,
// shape, dtype, payload offset (in values), trainable flag and the SHA-256
// of its little-endian bytes.

namespace aligncap {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a checkpoint does not fit the model it is loaded into.
class IncompatibleCheckpoint : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct CheckpointTensor {
  std::string name;
  Shape shape;
  bool trainable = true;
  std::vector<double> values;
};

struct Checkpoint {
  TrainingConfig config;
  std::size_t step = 0;
  std::vector<CheckpointTensor> tensors;
};

/// Lowercase hex SHA-256 of the values as little-endian float64 bytes.
std::string sha256_hex(std::span<const double> values);

void write_checkpoint(const std::filesystem::path& path, const AlignCapModel& model,
                      std::size_t step);
/// Verifies magic, manifest and every hash; throws CheckpointError.
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Copies the tensors into the model. Names, shapes and trainable flags
/// must match exactly, or IncompatibleCheckpoint is thrown.
void apply_checkpoint(AlignCapModel& model, const Checkpoint& ckpt);

}  // namespace aligncap
