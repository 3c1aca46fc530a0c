#include "aligncap/training.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "aligncap/checkpoint.hpp"

namespace aligncap {

using nlohmann::json;
using nlohmann::ordered_json;

Adam::Adam(ParameterStore& store, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Parameter& p : store.all()) {
    if (!p.trainable) continue;
    slots_.push_back({p.tensor, std::vector<double>(p.tensor.numel(), 0.0),
                      std::vector<double>(p.tensor.numel(), 0.0)});
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) s.param.zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Slot& s : slots_) {
    if (!s.param.has_grad()) continue;
    const auto g = s.param.grad();
    auto w = s.param.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps_);
    }
  }
}

std::string MetricRecord::to_json() const {
  ordered_json j;
  j["step"] = step;
  j["l_tag"] = losses.l_tag;
  j["l_cap"] = losses.l_cap;
  j["l_cond"] = losses.l_cond;
  j["l_multi"] = losses.l_multi;
  j["total"] = losses.total;
  return j.dump();
}

MetricRecord MetricRecord::from_json(std::string_view line) {
  try {
    const json j = json::parse(line);
    MetricRecord r;
    r.step = j.at("step").get<std::size_t>();
    r.losses = {j.at("l_tag").get<double>(), j.at("l_cap").get<double>(),
                j.at("l_cond").get<double>(), j.at("l_multi").get<double>(),
                j.at("total").get<double>()};
    return r;
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("metric record: {}", e.what()));
  }
}

std::vector<SyntheticExample> batch_at(std::span<const SyntheticExample> data, std::size_t step,
                                       std::size_t batch_size) {
  if (data.empty()) throw PreconditionError("batch_at: empty dataset");
  std::vector<SyntheticExample> batch;
  batch.reserve(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) {
    batch.push_back(data[(step * batch_size + k) % data.size()]);
  }
  return batch;
}

LossValues evaluate(const AlignCapModel& model, std::span<const SyntheticExample> data) {
  if (data.empty()) throw PreconditionError("evaluate: empty dataset");
  const TrainingConfig& cfg = model.config();
  const Rng base = Rng(cfg.seed).split("eval");
  LossValues acc;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < data.size(); start += cfg.batch_size, ++batches) {
    const auto batch = data.subspan(start, std::min(cfg.batch_size, data.size() - start));
    const LossValues v = model.forward(batch, base.split(batches), false).values();
    acc.l_tag += v.l_tag;
    acc.l_cap += v.l_cap;
    acc.l_cond += v.l_cond;
    acc.l_multi += v.l_multi;
    acc.total += v.total;
  }
  const double inv = 1.0 / static_cast<double>(batches);
  return {acc.l_tag * inv, acc.l_cap * inv, acc.l_cond * inv, acc.l_multi * inv, acc.total * inv};
}

namespace {

bool grads_finite(const ParameterStore& store) {
  for (const Parameter& p : store.all()) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

std::vector<std::vector<double>> snapshot(const ParameterStore& store) {
  std::vector<std::vector<double>> out;
  for (const Parameter& p : store.all()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(ParameterStore& store, const std::vector<std::vector<double>>& snap) {
  auto params = store.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    std::copy(snap[i].begin(), snap[i].end(), dst.begin());
  }
}

}  // namespace

std::vector<MetricRecord> train(AlignCapModel& model, std::span<const SyntheticExample> data,
                                const TrainOptions& options) {
  const TrainingConfig& cfg = model.config();
  if (data.empty()) throw PreconditionError("train: empty dataset");
  ParameterStore& store = model.parameters();
  Adam adam(store, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);

  std::ofstream metrics;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    metrics.open(*options.out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw std::runtime_error(fmt::format("cannot write metrics in {}", options.out_dir->string()));
  }
  std::vector<MetricRecord> records;
  auto emit = [&](const MetricRecord& r) {
    records.push_back(r);
    if (metrics.is_open()) metrics << r.to_json() << '\n' << std::flush;
    if (options.on_record) options.on_record(r);
  };

  // Parameters that last produced a finite loss and gradient, and their step.
  auto last_good = snapshot(store);
  std::size_t last_good_step = 0;
  auto diverge = [&](std::size_t step, const std::string& why) {
    restore(store, last_good);
    if (options.out_dir) write_checkpoint(*options.out_dir / "checkpoint", model, last_good_step);
    throw TrainingDiverged(fmt::format("training diverged at step {}: {}", step, why), step);
  };

  const Rng base = Rng(cfg.seed).split("train");
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto batch = batch_at(data, step, cfg.batch_size);
    adam.zero_grad();
    LossBreakdown losses;
    try {
      losses = model.forward(batch, base.split(step), true);
    } catch (const NumericError& e) {
      diverge(step, e.what());
    }
    if (!std::isfinite(losses.total.item())) diverge(step, "total loss is not finite");
    losses.total.backward();
    if (!grads_finite(store)) diverge(step, "gradient is not finite");
    last_good = snapshot(store);
    last_good_step = step;
    emit({step, losses.values()});
    spdlog::debug("step {} total {:.6f}", step, losses.total.item());
    adam.step();
  }

  LossValues final_losses;
  try {
    final_losses = evaluate(model, data);
  } catch (const NumericError& e) {
    diverge(cfg.steps, e.what());
  }
  emit({cfg.steps, final_losses});
  if (options.out_dir) write_checkpoint(*options.out_dir / "checkpoint", model, cfg.steps);
  return records;
}

std::span<const std::string_view> trainable_modules() {
  static constexpr std::array<std::string_view, 4> kModules = {
      "spatial-awareness", "latent-refinement", "semantic-alignment", "losses-training"};
  return kModules;
}

std::vector<GroupCheck> check_model_gradients(const TrainingConfig& config, std::string_view module,
                                              double corrupt) {
  if (!module.empty()) {
    bool known = false;
    for (std::string_view m : trainable_modules()) known = known || m == module;
    if (!known) throw ValidationError(fmt::format("unknown module '{}'", module));
  }
  AlignCapModel model(config);
  // Zero-initialized tensors sit on symmetric points where some paths carry
  // no gradient at all; move them off so every parameter is exercised.
  model.parameters().jitter_zero_trainables(config.seed, 0.1);
  const auto data = make_synthetic_dataset(config.seed, config.batch_size, config.dims.grid,
                                           config.dims.channels, model.tags());
  const Rng rng = Rng(config.seed).split("grad-check");
  const auto loss = [&] { return model.forward(data, rng, true).total; };

  std::vector<GroupCheck> out;
  for (std::string_view m : trainable_modules()) {
    if (!module.empty() && m != module) continue;
    const std::string prefix = std::string(m) + "/";
    std::vector<Tensor> tensors;
    std::vector<const Parameter*> owners;
    for (const Parameter& p : model.parameters().all()) {
      if (p.trainable && p.name.starts_with(prefix)) {
        tensors.push_back(p.tensor);
        owners.push_back(&p);
      }
    }
    const auto reports = finite_diff_check_many(loss, tensors, kGradCheckStep, corrupt, DiffMethod::Ridders);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      out.push_back({std::string(m), owners[i]->name, owners[i]->tensor.numel(), reports[i]});
    }
  }
  return out;
}

}  // namespace aligncap
