#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "aligncap/god.hpp"

namespace aligncap {

struct LossWeights {
  double alpha = 1.0;   // tagging
  double beta = 1.0;    // captioning
  double gamma = 1.0;   // conditioned alignment
  double lambda = 1.0;  // multimodal alignment
};

struct ModelDims {
  std::size_t grid = 8;          // G
  std::size_t channels = 8;      // C
  std::size_t d_v = 32;
  std::size_t d_t = 32;
  std::size_t d_c = 32;
  std::size_t d_s = 32;
  std::size_t d_llm = 48;
  std::size_t v_llm = 512;
  std::size_t p = 7;             // RoI output size
  std::size_t sampling_ratio = 2;
  std::size_t h = 4;             // attention heads
  std::size_t mlp_hidden = 64;
  std::size_t m = 8;             // latent queries

  bool operator==(const ModelDims&) const = default;
};

struct TrainingConfig {
  std::uint64_t seed = 42;
  std::size_t batch_size = 8;
  std::size_t steps = 300;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t dataset_size = 8;
  ModelDims dims;
  GodConfig god;
  LossWeights weights;
  double dropout_p = 0.1;
  double tau_init = 10.0;
  double bias_init = 10.0;

  /// Throws ValidationError naming the offending field.
  void validate() const;

  /// Smallest dims that still exercise every code path; used by gradient checks.
  static TrainingConfig minimized();

  static TrainingConfig from_json_text(std::string_view text);
  static TrainingConfig load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

}  // namespace aligncap
