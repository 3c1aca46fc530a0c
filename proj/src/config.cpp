#include "aligncap/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace aligncap {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Words every caption and tag may use, plus reserved ids.
constexpr std::size_t kMinLlmVocab = 64 + 3 + 3;

void require(bool ok, std::string_view field, std::string_view what) {
  if (!ok) throw ValidationError(fmt::format("config: {} {}", field, what));
}

template <typename T>
T read(const json& value, std::string_view field) {
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<long long>() >= 0)) {
        throw ValidationError("");
      }
    }
    return value.get<T>();
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("config: {} has the wrong type", field));
  }
}

// Calls `on(key, value)` for each member, rejecting non-objects.
template <typename F>
void each_member(const json& obj, std::string_view section, F&& on) {
  if (!obj.is_object()) throw ValidationError(fmt::format("config: {} must be an object", section));
  for (auto it = obj.begin(); it != obj.end(); ++it) on(it.key(), it.value());
}

[[noreturn]] void unknown(std::string_view section, const std::string& key) {
  throw ValidationError(fmt::format("config: unknown field '{}{}'", section, key));
}

}  // namespace

void TrainingConfig::validate() const {
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(dataset_size >= 1, "dataset_size", "must be >= 1");
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, "learning_rate", "must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0, "optimizer.beta1", "must be in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "optimizer.beta2", "must be in [0, 1)");
  require(eps > 0.0, "optimizer.eps", "must be positive");
  require(dropout_p >= 0.0 && dropout_p < 1.0, "dropout_p", "must be in [0, 1)");
  require(tau_init > 0.0 && std::isfinite(tau_init), "sigmoid_init.tau", "must be positive");
  require(std::isfinite(bias_init), "sigmoid_init.bias", "must be finite");
  const ModelDims& d = dims;
  const std::pair<std::size_t, const char*> positive[] = {
      {d.grid, "grid"},   {d.channels, "channels"}, {d.d_v, "d_v"},   {d.d_t, "d_t"},
      {d.d_c, "d_c"},     {d.d_s, "d_s"},           {d.d_llm, "d_llm"}, {d.p, "p"},
      {d.sampling_ratio, "sampling_ratio"},         {d.h, "h"},       {d.mlp_hidden, "mlp_hidden"},
      {d.m, "m"}};
  for (const auto& [v, name] : positive) require(v >= 1, fmt::format("dims.{}", name), "must be >= 1");
  for (const auto& [v, name] : {std::pair{d.d_v, "d_v"}, {d.d_c, "d_c"}, {d.d_llm, "d_llm"}}) {
    require(v % d.h == 0, fmt::format("dims.{}", name), fmt::format("must be divisible by h={}", d.h));
  }
  require(d.v_llm >= kMinLlmVocab, "dims.v_llm", fmt::format("must be >= {}", kMinLlmVocab));
  const LossWeights& w = weights;
  for (const auto& [v, name] : {std::pair{w.alpha, "alpha"}, {w.beta, "beta"}, {w.gamma, "gamma"},
                                {w.lambda, "lambda"}}) {
    require(std::isfinite(v) && v >= 0.0, fmt::format("loss_weights.{}", name), "must be >= 0");
  }
  try {
    god.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("config: {}", e.what()));
  }
}

TrainingConfig TrainingConfig::minimized() {
  TrainingConfig c;
  c.batch_size = 2;
  c.dataset_size = 2;
  c.steps = 2;
  c.dims = ModelDims{4, 4, 8, 8, 8, 8, 8, 72, 2, 2, 2, 16, 2};
  c.god = GodConfig{1, 2, DiscrepancyMode::FeatureCosine};
  c.tau_init = 1.0;
  c.bias_init = 0.0;
  return c;
}

TrainingConfig TrainingConfig::from_json_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("config: {}", e.what()));
  }
  TrainingConfig c;
  each_member(doc, "config", [&](const std::string& key, const json& v) {
    if (key == "seed") c.seed = read<std::uint64_t>(v, key);
    else if (key == "batch_size") c.batch_size = read<std::size_t>(v, key);
    else if (key == "steps") c.steps = read<std::size_t>(v, key);
    else if (key == "learning_rate") c.learning_rate = read<double>(v, key);
    else if (key == "dataset_size") c.dataset_size = read<std::size_t>(v, key);
    else if (key == "dropout_p") c.dropout_p = read<double>(v, key);
    else if (key == "optimizer") {
      each_member(v, key, [&](const std::string& k, const json& x) {
        if (k == "beta1") c.beta1 = read<double>(x, k);
        else if (k == "beta2") c.beta2 = read<double>(x, k);
        else if (k == "eps") c.eps = read<double>(x, k);
        else unknown("optimizer.", k);
      });
    } else if (key == "dims") {
      ModelDims& d = c.dims;
      each_member(v, key, [&](const std::string& k, const json& x) {
        std::size_t* slot = k == "grid"             ? &d.grid
                            : k == "channels"       ? &d.channels
                            : k == "d_v"            ? &d.d_v
                            : k == "d_t"            ? &d.d_t
                            : k == "d_c"            ? &d.d_c
                            : k == "d_s"            ? &d.d_s
                            : k == "d_llm"          ? &d.d_llm
                            : k == "v_llm"          ? &d.v_llm
                            : k == "p"              ? &d.p
                            : k == "sampling_ratio" ? &d.sampling_ratio
                            : k == "h"              ? &d.h
                            : k == "mlp_hidden"     ? &d.mlp_hidden
                            : k == "m"              ? &d.m
                                                    : nullptr;
        if (slot == nullptr) unknown("dims.", k);
        *slot = read<std::size_t>(x, k);
      });
    } else if (key == "god") {
      each_member(v, key, [&](const std::string& k, const json& x) {
        if (k == "k") c.god.k = read<std::size_t>(x, k);
        else if (k == "j") c.god.j = read<std::size_t>(x, k);
        else if (k == "discrepancy_mode")
          c.god.discrepancy_mode = parse_discrepancy_mode(read<std::string>(x, k));
        else unknown("god.", k);
      });
    } else if (key == "loss_weights") {
      each_member(v, key, [&](const std::string& k, const json& x) {
        if (k == "alpha") c.weights.alpha = read<double>(x, k);
        else if (k == "beta") c.weights.beta = read<double>(x, k);
        else if (k == "gamma") c.weights.gamma = read<double>(x, k);
        else if (k == "lambda") c.weights.lambda = read<double>(x, k);
        else unknown("loss_weights.", k);
      });
    } else if (key == "sigmoid_init") {
      each_member(v, key, [&](const std::string& k, const json& x) {
        if (k == "tau") c.tau_init = read<double>(x, k);
        else if (k == "bias") c.bias_init = read<double>(x, k);
        else unknown("sigmoid_init.", k);
      });
    } else {
      unknown("", key);
    }
  });
  c.validate();
  return c;
}

TrainingConfig TrainingConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open config file {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string TrainingConfig::to_json_text() const {
  ordered_json doc;
  doc["seed"] = seed;
  doc["batch_size"] = batch_size;
  doc["steps"] = steps;
  doc["learning_rate"] = learning_rate;
  doc["dataset_size"] = dataset_size;
  doc["optimizer"] = {{"beta1", beta1}, {"beta2", beta2}, {"eps", eps}};
  doc["dims"] = {{"grid", dims.grid},   {"channels", dims.channels},
                 {"d_v", dims.d_v},     {"d_t", dims.d_t},
                 {"d_c", dims.d_c},     {"d_s", dims.d_s},
                 {"d_llm", dims.d_llm}, {"v_llm", dims.v_llm},
                 {"p", dims.p},         {"sampling_ratio", dims.sampling_ratio},
                 {"h", dims.h},         {"mlp_hidden", dims.mlp_hidden},
                 {"m", dims.m}};
  doc["god"] = {{"k", god.k}, {"j", god.j}, {"discrepancy_mode", to_string(god.discrepancy_mode)}};
  doc["loss_weights"] = {{"alpha", weights.alpha},
                         {"beta", weights.beta},
                         {"gamma", weights.gamma},
                         {"lambda", weights.lambda}};
  doc["dropout_p"] = dropout_p;
  doc["sigmoid_init"] = {{"tau", tau_init}, {"bias", bias_init}};
  return doc.dump(2);
}

}  // namespace aligncap
