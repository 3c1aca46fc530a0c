#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "aligncap/tensor.hpp"

namespace aligncap::detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized lazily, only when requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

struct Access {
  static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};

/// Builds an op result. The node records parents and the backward closure
/// only when at least one parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents,
                   std::function<void(Node&)> backward,
                   const char* op_name);

inline Node& node_of(const Tensor& t) { return *Access::node(t); }

}  // namespace aligncap::detail
