#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aligncap/tensor.hpp"

namespace aligncap {

/// A named model tensor. Frozen parameters never receive optimizer updates;
/// gradients may still flow through them to upstream tensors.
struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Owns every parameter of a model under unique names.
///
/// Each parameter is initialized from its own stream, `Rng(seed).split(name)`,
/// so values depend only on the seed and the name, never on creation order.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Entries drawn uniformly from [-bound, bound].
  Tensor uniform(const std::string& name, Shape shape, double bound, bool trainable = true);
  Tensor constant(const std::string& name, Shape shape, double value, bool trainable = true);
  /// Registers an externally computed value.
  Tensor adopt(const std::string& name, Tensor value, bool trainable);

  std::span<const Parameter> all() const { return params_; }
  std::span<Parameter> all() { return params_; }
  const Parameter* find(std::string_view name) const;
  Parameter* find(std::string_view name);
  /// Throws std::out_of_range when absent.
  Tensor& at(std::string_view name);

  std::size_t trainable_count() const;

  /// Fills every all-zero trainable tensor with uniform [-bound, bound]
  /// noise. Zero-initialized residual branches block gradient flow, so
  /// whole-model gradient checks call this first.
  void jitter_zero_trainables(std::uint64_t seed, double bound);

 private:
  std::uint64_t seed_;
  std::vector<Parameter> params_;
};

}  // namespace aligncap
