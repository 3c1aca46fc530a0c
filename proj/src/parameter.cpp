#include "aligncap/parameter.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

#include "aligncap/rng.hpp"

namespace aligncap {

Tensor ParameterStore::uniform(const std::string& name, Shape shape, double bound,
                               bool trainable) {
  Rng rng = Rng(seed_).split(name);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return adopt(name, Tensor(std::move(shape), std::move(values)), trainable);
}

Tensor ParameterStore::constant(const std::string& name, Shape shape, double value,
                                bool trainable) {
  return adopt(name, Tensor::full(std::move(shape), value), trainable);
}

Tensor ParameterStore::adopt(const std::string& name, Tensor value, bool trainable) {
  if (find(name) != nullptr) {
    throw std::invalid_argument(fmt::format("duplicate parameter name '{}'", name));
  }
  Tensor t = value.detach();
  t.set_requires_grad(trainable);
  params_.push_back(Parameter{name, t, trainable});
  return t;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  auto it = std::find_if(params_.begin(), params_.end(),
                         [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

Parameter* ParameterStore::find(std::string_view name) {
  auto it = std::find_if(params_.begin(), params_.end(),
                         [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

Tensor& ParameterStore::at(std::string_view name) {
  Parameter* p = find(name);
  if (p == nullptr) throw std::out_of_range(fmt::format("no parameter named '{}'", name));
  return p->tensor;
}

std::size_t ParameterStore::trainable_count() const {
  return static_cast<std::size_t>(
      std::count_if(params_.begin(), params_.end(), [](const Parameter& p) { return p.trainable; }));
}

void ParameterStore::jitter_zero_trainables(std::uint64_t seed, double bound) {
  for (Parameter& p : params_) {
    if (!p.trainable) continue;
    auto data = p.tensor.mutable_data();
    if (std::any_of(data.begin(), data.end(), [](double v) { return v != 0.0; })) continue;
    Rng rng = Rng(seed).split(p.name);
    for (double& v : data) v = rng.uniform(-bound, bound);
  }
}

}  // namespace aligncap
