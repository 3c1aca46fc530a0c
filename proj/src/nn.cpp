#include "aligncap/nn.hpp"

#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "aligncap/ops.hpp"

namespace aligncap {

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal) {
  const std::size_t d = q.cols();
  if (heads == 0 || d % heads != 0) {
    throw ShapeError(fmt::format("attention: {} heads do not divide width {}", heads, d));
  }
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw ShapeError(fmt::format("attention: q {} k {} v {}", shape_to_string(q.shape()),
                                 shape_to_string(k.shape()), shape_to_string(v.shape())));
  }
  if (k.rows() == 0) throw PreconditionError("attention over an empty key set");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  // Query i sits at absolute position (keys - queries + i) in causal mode.
  std::optional<std::size_t> offset;
  if (causal) offset = k.rows() - q.rows();
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, (h + 1) * dh);
    const Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    outs.push_back(matmul(softmax(scores, offset), vh));
  }
  return heads == 1 ? outs.front() : concat_cols(outs);
}

Tensor multi_head_attention(const AttentionParams& p, const Tensor& q_src, const Tensor& k_src,
                            const Tensor& v_src, bool causal) {
  return p.output(attend(p.query(q_src), p.key(k_src), p.value(v_src), p.heads, causal));
}

Linear make_linear(ParameterStore& store, const std::string& name, std::size_t in,
                   std::size_t out, bool trainable, bool zero_init) {
  Linear l;
  const std::string wname = name + ".weight";
  if (zero_init) {
    l.weight = store.constant(wname, {in, out}, 0.0, trainable);
  } else {
    l.weight = store.uniform(wname, {in, out}, 1.0 / std::sqrt(static_cast<double>(in)),
                             trainable);
  }
  l.bias = store.constant(name + ".bias", {out}, 0.0, trainable);
  return l;
}

LayerNorm make_layer_norm(ParameterStore& store, const std::string& name, std::size_t dim,
                          bool trainable) {
  return LayerNorm{store.constant(name + ".gain", {dim}, 1.0, trainable),
                   store.constant(name + ".bias", {dim}, 0.0, trainable)};
}

AttentionParams make_attention(ParameterStore& store, const std::string& name,
                               std::size_t query_in, std::size_t kv_in, std::size_t model_dim,
                               std::size_t out_dim, std::size_t heads, bool trainable,
                               bool zero_output) {
  if (heads == 0 || model_dim % heads != 0) {
    throw ShapeError(fmt::format("{}: {} heads do not divide width {}", name, heads, model_dim));
  }
  AttentionParams p;
  p.query = make_linear(store, name + ".wq", query_in, model_dim, trainable);
  p.key = make_linear(store, name + ".wk", kv_in, model_dim, trainable);
  p.value = make_linear(store, name + ".wv", kv_in, model_dim, trainable);
  p.output = make_linear(store, name + ".wo", model_dim, out_dim, trainable, zero_output);
  p.heads = heads;
  return p;
}

}  // namespace aligncap
