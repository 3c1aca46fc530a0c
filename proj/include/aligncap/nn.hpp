#pragma once

#include <cstddef>
#include <string>

#include "aligncap/parameter.hpp"
#include "aligncap/tensor.hpp"

namespace aligncap {

/// y = x * weight + bias, weight stored [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  double eps = 1e-5;

  Tensor operator()(const Tensor& x) const;
};

/// Query/key/value/output projections of a multi-head attention layer.
struct AttentionParams {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  std::size_t heads = 1;
};

/// Scaled dot-product attention over already projected q, k, v, split into
/// `heads` column groups. Returns the concatenated heads (before the output
/// projection). `causal` masks keys past each query's own position.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
              bool causal = false);

/// Full layer: output(attend(query(q_src), key(k_src), value(v_src))).
Tensor multi_head_attention(const AttentionParams& p, const Tensor& q_src, const Tensor& k_src,
                            const Tensor& v_src, bool causal = false);

// Builders. Weights use fan-in scaled uniform init U(-1/sqrt(in), 1/sqrt(in));
// biases start at zero. `zero_init` zeroes the weight too.
Linear make_linear(ParameterStore& store, const std::string& name, std::size_t in,
                   std::size_t out, bool trainable = true, bool zero_init = false);
LayerNorm make_layer_norm(ParameterStore& store, const std::string& name, std::size_t dim,
                          bool trainable = true);
AttentionParams make_attention(ParameterStore& store, const std::string& name,
                               std::size_t query_in, std::size_t kv_in, std::size_t model_dim,
                               std::size_t out_dim, std::size_t heads, bool trainable = true,
                               bool zero_output = false);

}  // namespace aligncap
