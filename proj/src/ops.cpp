#include "aligncap/ops.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "node.hpp"

namespace aligncap {

using detail::make_result;
using detail::Node;
using detail::node_of;

namespace {

enum class Broadcast { Same, Row, Scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.numel() == 1) return Broadcast::Scalar;
  if (b.rank() == 1 && b.shape()[0] == a.cols() && a.rank() >= 1) return Broadcast::Row;
  throw ShapeError(fmt::format("{}: cannot broadcast {} onto {}", op,
                               shape_to_string(b.shape()), shape_to_string(a.shape())));
}

std::size_t b_index(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::Same: return i;
    case Broadcast::Row: return i % cols;
    case Broadcast::Scalar: return 0;
  }
  return 0;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(fmt::format("{}: expected a rank-2 tensor, got {}", op,
                                 shape_to_string(t.shape())));
  }
}

// Shorthand for the parent slot of a node during backward.
Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result(a.shape(), std::move(out), {a},
                     [deriv](Node& n) {
                       Node& p = parent(n, 0);
                       auto& g = p.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += n.grad[i] * deriv(p.data[i], n.data[i]);
                       }
                     },
                     name);
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError(fmt::format("matmul: inner dimensions disagree for {} x {}",
                                 shape_to_string(a.shape()), shape_to_string(b.shape())));
  }
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = &B[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b},
                     [m, k, n](Node& c) {
                       Node& na = parent(c, 0);
                       Node& nb = parent(c, 1);
                       if (na.requires_grad) {
                         auto& ga = na.ensure_grad();  // dA = dC * B^T
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < n; ++j)
                               s += c.grad[i * n + j] * nb.data[p * n + j];
                             ga[i * k + p] += s;
                           }
                       }
                       if (nb.requires_grad) {
                         auto& gb = nb.ensure_grad();  // dB = A^T * dC
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double av = na.data[i * k + p];
                             for (std::size_t j = 0; j < n; ++j)
                               gb[p * n + j] += av * c.grad[i * n + j];
                           }
                       }
                     },
                     "matmul");
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<double> out(r * c);
  const auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_result({c, r}, std::move(out), {a},
                     [r, c](Node& n) {
                       auto& g = parent(n, 0).ensure_grad();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j * r + i];
                     },
                     "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind(a, b, "add");
  const std::size_t cols = a.cols();
  std::vector<double> out(a.numel());
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[b_index(kind, i, cols)];
  return make_result(a.shape(), std::move(out), {a, b},
                     [kind, cols](Node& n) {
                       Node& na = parent(n, 0);
                       Node& nb = parent(n, 1);
                       if (na.requires_grad) {
                         auto& g = na.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                       }
                       if (nb.requires_grad) {
                         auto& g = nb.ensure_grad();
                         for (std::size_t i = 0; i < n.grad.size(); ++i)
                           g[b_index(kind, i, cols)] += n.grad[i];
                       }
                     },
                     "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("sub: shape mismatch {} vs {}", shape_to_string(a.shape()),
                                 shape_to_string(b.shape())));
  }
  std::vector<double> out(a.numel());
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [](Node& n) {
                       Node& na = parent(n, 0);
                       Node& nb = parent(n, 1);
                       if (na.requires_grad) {
                         auto& g = na.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                       }
                       if (nb.requires_grad) {
                         auto& g = nb.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
                       }
                     },
                     "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind(a, b, "mul");
  const std::size_t cols = a.cols();
  std::vector<double> out(a.numel());
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[b_index(kind, i, cols)];
  return make_result(a.shape(), std::move(out), {a, b},
                     [kind, cols](Node& n) {
                       Node& na = parent(n, 0);
                       Node& nb = parent(n, 1);
                       if (na.requires_grad) {
                         auto& g = na.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += n.grad[i] * nb.data[b_index(kind, i, cols)];
                       }
                       if (nb.requires_grad) {
                         auto& g = nb.ensure_grad();
                         for (std::size_t i = 0; i < n.grad.size(); ++i)
                           g[b_index(kind, i, cols)] += n.grad[i] * na.data[i];
                       }
                     },
                     "mul");
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid", [](double x) { return sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& a) {
  return unary(
      a, "silu", [](double x) { return x * sigmoid(x); },
      [](double x, double) {
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, "softplus", [](double x) { return softplus(x); },
      [](double x, double) { return sigmoid(x); });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result(Shape{}, {s}, {a},
                     [](Node& n) {
                       auto& g = parent(n, 0).ensure_grad();
                       for (double& v : g) v += n.grad[0];
                     },
                     "sum");
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw PreconditionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0) throw PreconditionError("mean_rows of a tensor with no rows");
  std::vector<double> out(c, 0.0);
  const auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += in[i * c + j];
  const double inv = 1.0 / static_cast<double>(r);
  for (double& v : out) v *= inv;
  return make_result({1, c}, std::move(out), {a},
                     [r, c, inv](Node& n) {
                       auto& g = parent(n, 0).ensure_grad();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j] * inv;
                     },
                     "mean_rows");
}

Tensor softmax(const Tensor& x, std::optional<std::size_t> causal_offset) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(x.numel(), 0.0);
  const auto in = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t visible = causal_offset ? std::min(c, i + *causal_offset + 1) : c;
    if (visible == 0) continue;
    const double* row = &in[i * c];
    const double mx = *std::max_element(row, row + visible);
    double z = 0.0;
    for (std::size_t j = 0; j < visible; ++j) {
      out[i * c + j] = std::exp(row[j] - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < visible; ++j) out[i * c + j] /= z;
  }
  return make_result(x.shape(), std::move(out), {x},
                     [r, c](Node& n) {
                       auto& g = parent(n, 0).ensure_grad();
                       for (std::size_t i = 0; i < r; ++i) {
                         double d = 0.0;
                         for (std::size_t j = 0; j < c; ++j)
                           d += n.grad[i * c + j] * n.data[i * c + j];
                         for (std::size_t j = 0; j < c; ++j)
                           g[i * c + j] += n.data[i * c + j] * (n.grad[i * c + j] - d);
                       }
                     },
                     "softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.cols();
  if (d == 0) throw ShapeError("layer_norm: empty feature dimension");
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError(fmt::format("layer_norm: input {} with gain {} and bias {}",
                                 shape_to_string(x.shape()), shape_to_string(gain.shape()),
                                 shape_to_string(bias.shape())));
  }
  if (!(eps > 0.0)) throw PreconditionError("layer_norm: eps must be positive");
  const std::size_t r = x.rows();
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(r);
  std::vector<double> out(x.numel());
  const auto in = x.data();
  const auto G = gain.data();
  const auto B = bias.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = &in[i * d];
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * G[j] + B[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [r, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
        Node& nx = parent(n, 0);
        Node& ng = parent(n, 1);
        Node& nb = parent(n, 2);
        if (ng.requires_grad) {
          auto& g = ng.ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += n.grad[i * d + j] * xhat[i * d + j];
        }
        if (nb.requires_grad) {
          auto& g = nb.ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += n.grad[i * d + j];
        }
        if (nx.requires_grad) {
          auto& g = nx.ensure_grad();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t i = 0; i < r; ++i) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dy = n.grad[i * d + j] * ng.data[j];
              sum_dy += dy;
              sum_dy_xhat += dy * xhat[i * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const double dy = n.grad[i * d + j] * ng.data[j];
              g[i * d + j] +=
                  inv_std[i] * (dy - inv_d * sum_dy - xhat[i * d + j] * inv_d * sum_dy_xhat);
            }
          }
        }
      },
      "layer_norm");
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw PreconditionError(fmt::format("dropout: invalid probability {}", p));
  }
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw PreconditionError("concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    if (t.cols() != c) {
      throw ShapeError(fmt::format("concat_rows: column mismatch {} vs {}", c, t.cols()));
    }
    total += t.rows();
  }
  std::vector<double> out;
  out.reserve(total * c);
  std::vector<std::size_t> offsets;
  for (const Tensor& t : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  return make_result({total, c}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                     [offsets = std::move(offsets)](Node& n) {
                       for (std::size_t k = 0; k < n.parents.size(); ++k) {
                         Node& p = parent(n, k);
                         if (!p.requires_grad) continue;
                         auto& g = p.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[offsets[k] + i];
                       }
                     },
                     "concat_rows");
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw PreconditionError("concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    if (t.rows() != r) {
      throw ShapeError(fmt::format("concat_cols: row mismatch {} vs {}", r, t.rows()));
    }
    widths.push_back(t.cols());
    total += t.cols();
  }
  std::vector<double> out(r * total);
  std::size_t col0 = 0;
  for (const Tensor& t : parts) {
    const auto in = t.data();
    const std::size_t w = t.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * total + col0 + j] = in[i * w + j];
    col0 += w;
  }
  return make_result({r, total}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                     [r, total, widths = std::move(widths)](Node& n) {
                       std::size_t c0 = 0;
                       for (std::size_t k = 0; k < n.parents.size(); ++k) {
                         Node& p = parent(n, k);
                         const std::size_t w = widths[k];
                         if (p.requires_grad) {
                           auto& g = p.ensure_grad();
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < w; ++j)
                               g[i * w + j] += n.grad[i * total + c0 + j];
                         }
                         c0 += w;
                       }
                     },
                     "concat_cols");
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t c = a.cols();
  if (begin > end || end > a.rows()) {
    throw ShapeError(fmt::format("slice_rows: [{}, {}) out of range for {} rows", begin, end,
                                 a.rows()));
  }
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                          a.data().begin() + static_cast<std::ptrdiff_t>(end * c));
  return make_result({end - begin, c}, std::move(out), {a},
                     [begin, c](Node& n) {
                       auto& g = parent(n, 0).ensure_grad();
                       for (std::size_t i = 0; i < n.grad.size(); ++i) g[begin * c + i] += n.grad[i];
                     },
                     "slice_rows");
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t r = a.rows(), c = a.cols();
  if (begin > end || end > c) {
    throw ShapeError(fmt::format("slice_cols: [{}, {}) out of range for {} cols", begin, end, c));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(r * w);
  const auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = in[i * c + begin + j];
  return make_result({r, w}, std::move(out), {a},
                     [r, c, w, begin](Node& n) {
                       auto& g = parent(n, 0).ensure_grad();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += n.grad[i * w + j];
                     },
                     "slice_cols");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError(fmt::format("reshape: {} to {}", shape_to_string(a.shape()),
                                 shape_to_string(shape)));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a},
                     [](Node& n) {
                       auto& g = parent(n, 0).ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                     },
                     "reshape");
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  const std::size_t c = table.cols(), r = table.rows();
  std::vector<double> out;
  out.reserve(ids.size() * c);
  const auto in = table.data();
  for (std::size_t id : ids) {
    if (id >= r) throw ShapeError(fmt::format("gather_rows: index {} >= {} rows", id, r));
    out.insert(out.end(), in.begin() + static_cast<std::ptrdiff_t>(id * c),
               in.begin() + static_cast<std::ptrdiff_t>((id + 1) * c));
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  const std::size_t n = idx.size();
  return make_result({n, c}, std::move(out), {table},
                     [c, idx = std::move(idx)](Node& n) {
                       auto& g = parent(n, 0).ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += n.grad[i * c + j];
                     },
                     "gather_rows");
}

Tensor mix_rows(const Tensor& src, const RowMix& mix) {
  const std::size_t c = src.cols(), r = src.rows();
  std::vector<double> out(mix.terms.size() * c, 0.0);
  const auto in = src.data();
  for (std::size_t o = 0; o < mix.terms.size(); ++o) {
    for (const auto& [index, weight] : mix.terms[o]) {
      if (index >= r) throw ShapeError(fmt::format("mix_rows: index {} >= {} rows", index, r));
      for (std::size_t j = 0; j < c; ++j) out[o * c + j] += weight * in[index * c + j];
    }
  }
  return make_result({mix.terms.size(), c}, std::move(out), {src},
                     [c, mix](Node& n) {
                       auto& g = parent(n, 0).ensure_grad();
                       for (std::size_t o = 0; o < mix.terms.size(); ++o)
                         for (const auto& [index, weight] : mix.terms[o])
                           for (std::size_t j = 0; j < c; ++j)
                             g[index * c + j] += weight * n.grad[o * c + j];
                     },
                     "mix_rows");
}

Tensor stack_scalars(std::span<const Tensor> scalars, Shape shape) {
  if (shape_numel(shape) != scalars.size()) {
    throw ShapeError(fmt::format("stack_scalars: {} values for shape {}", scalars.size(),
                                 shape_to_string(shape)));
  }
  std::vector<double> out;
  out.reserve(scalars.size());
  for (const Tensor& s : scalars) out.push_back(s.item());
  return make_result(std::move(shape), std::move(out), std::vector<Tensor>(scalars.begin(), scalars.end()),
                     [](Node& n) {
                       for (std::size_t k = 0; k < n.parents.size(); ++k) {
                         Node& p = parent(n, k);
                         if (p.requires_grad) p.ensure_grad()[0] += n.grad[k];
                       }
                     },
                     "stack_scalars");
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  const std::size_t r = logits.rows(), c = logits.cols();
  if (targets.size() != r) {
    throw ShapeError(fmt::format("cross_entropy: {} targets for {} rows", targets.size(), r));
  }
  if (r == 0) throw PreconditionError("cross_entropy: no target positions");
  const auto in = logits.data();
  std::vector<double> probs(r * c);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] >= c) {
      throw ShapeError(fmt::format("cross_entropy: target {} >= {} classes", targets[i], c));
    }
    const double* row = &in[i * c];
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[targets[i]];
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  const double inv_r = 1.0 / static_cast<double>(r);
  return make_result(Shape{}, {total * inv_r}, {logits},
                     [r, c, inv_r, probs = std::move(probs), tgt = std::move(tgt)](Node& n) {
                       auto& g = parent(n, 0).ensure_grad();
                       const double up = n.grad[0] * inv_r;
                       for (std::size_t i = 0; i < r; ++i) {
                         for (std::size_t j = 0; j < c; ++j) g[i * c + j] += up * probs[i * c + j];
                         g[i * c + tgt[i]] -= up;
                       }
                     },
                     "cross_entropy");
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw ShapeError(fmt::format("dot: {} vs {}", shape_to_string(a.shape()),
                                 shape_to_string(b.shape())));
  }
  return sum(mul(a, reshape(b, a.shape())));
}

}  // namespace aligncap
