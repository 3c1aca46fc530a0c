#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aligncap/grad_check.hpp"
#include "aligncap/model.hpp"

namespace aligncap {

/// Adam over the trainable parameters of a store. Frozen entries are never
/// touched.
class Adam {
 public:
  Adam(ParameterStore& store, double lr, double beta1, double beta2, double eps);

  void zero_grad();
  void step();
  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct MetricRecord {
  std::size_t step = 0;
  LossValues losses;

  std::string to_json() const;
  static MetricRecord from_json(std::string_view line);
};

/// Eval-mode losses averaged over consecutive batches of `batch_size`
/// examples. View selection is seeded from `seed` so repeated calls agree.
LossValues evaluate(const AlignCapModel& model, std::span<const SyntheticExample> data);

/// Batch `step` covers examples (step * N + k) mod size, k < N.
std::vector<SyntheticExample> batch_at(std::span<const SyntheticExample> data, std::size_t step,
                                       std::size_t batch_size);

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, std::size_t step)
      : NumericError(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // metrics.jsonl + checkpoint
  std::function<void(const MetricRecord&)> on_record;
};

/// Runs `config.steps` Adam steps. One record per step (training-mode losses
/// of that step's batch, before the update) plus a final eval record at
/// step == steps. A non-finite loss writes the last good checkpoint and
/// throws TrainingDiverged.
std::vector<MetricRecord> train(AlignCapModel& model, std::span<const SyntheticExample> data,
                                const TrainOptions& options = {});

/// Worst relative error of one parameter tensor under the whole-model loss.
struct GroupCheck {
  std::string module;
  std::string parameter;
  std::size_t size = 0;
  GradCheckReport report;
};

inline constexpr double kGradCheckTolerance = 1e-4;
// Initial Ridders step for whole-model checks.
inline constexpr double kGradCheckStep = 0.03;

/// Finite-difference check of every trainable tensor of the full model
/// (minimized dims, dropout replayed from a fixed seed). `module` restricts
/// the check to one module prefix; empty means all. `corrupt` is added to
/// every analytic gradient coordinate.
std::vector<GroupCheck> check_model_gradients(const TrainingConfig& config,
                                              std::string_view module = {},
                                              double corrupt = 0.0);

/// Trainable module prefixes in pipeline order.
std::span<const std::string_view> trainable_modules();

}  // namespace aligncap
