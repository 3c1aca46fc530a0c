#include "aligncap/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "aligncap/ops.hpp"

namespace aligncap {

RegionFeature roi_align(const FeatureMap& fm, const BBox& box, std::size_t roi_size,
                        std::size_t sampling_ratio) {
  if (roi_size < 1 || sampling_ratio < 1) {
    throw PreconditionError("roi_align: roi_size and sampling_ratio must be >= 1");
  }
  const std::size_t g = fm.grid;
  if (fm.features.rows() != g * g) {
    throw ShapeError(fmt::format("roi_align: feature map has {} rows for grid {}",
                                 fm.features.rows(), g));
  }
  const double gd = static_cast<double>(g);
  const double bin_w = (box.x1 - box.x0) * gd / static_cast<double>(roi_size);
  const double bin_h = (box.y1 - box.y0) * gd / static_cast<double>(roi_size);
  const double inv_count = 1.0 / static_cast<double>(sampling_ratio * sampling_ratio);
  const double max_index = gd - 1.0;

  // One coordinate axis: clamped sample position -> (low, high, frac).
  auto axis = [&](double pos) {
    const double u = std::clamp(pos - 0.5, 0.0, max_index);
    const auto low = static_cast<std::size_t>(std::floor(u));
    const std::size_t high = std::min(low + 1, g - 1);
    return std::tuple{low, high, u - static_cast<double>(low)};
  };

  RowMix mix;
  mix.terms.resize(roi_size * roi_size);
  for (std::size_t py = 0; py < roi_size; ++py) {
    for (std::size_t px = 0; px < roi_size; ++px) {
      auto& terms = mix.terms[py * roi_size + px];
      for (std::size_t iy = 0; iy < sampling_ratio; ++iy) {
        const double y = box.y0 * gd + static_cast<double>(py) * bin_h +
                         (static_cast<double>(iy) + 0.5) * bin_h / sampling_ratio;
        const auto [y_lo, y_hi, fy] = axis(y);
        for (std::size_t ix = 0; ix < sampling_ratio; ++ix) {
          const double x = box.x0 * gd + static_cast<double>(px) * bin_w +
                           (static_cast<double>(ix) + 0.5) * bin_w / sampling_ratio;
          const auto [x_lo, x_hi, fx] = axis(x);
          terms.emplace_back(y_lo * g + x_lo, (1 - fy) * (1 - fx) * inv_count);
          terms.emplace_back(y_lo * g + x_hi, (1 - fy) * fx * inv_count);
          terms.emplace_back(y_hi * g + x_lo, fy * (1 - fx) * inv_count);
          terms.emplace_back(y_hi * g + x_hi, fy * fx * inv_count);
        }
      }
    }
  }
  return RegionFeature{mix_rows(fm.features, mix)};
}

RegionFeature spatial_block(const RegionFeature& candidate, const RegionFeature& target,
                            const SpatialBlockParams& p, Rng& rng, bool training) {
  const Tensor& cand = candidate.tokens;
  const Tensor& tgt = target.tokens;
  if (cand.cols() != tgt.cols()) {
    throw ShapeError(fmt::format("spatial_block: candidate {} vs target {}",
                                 shape_to_string(cand.shape()), shape_to_string(tgt.shape())));
  }
  // Keys come from the target and values from the candidate, so both views
  // must carry the same token count.
  if (cand.rows() != tgt.rows()) {
    throw ShapeError(fmt::format("spatial_block: candidate has {} tokens, target {}", cand.rows(),
                                 tgt.rows()));
  }
  const Tensor c_norm = p.ln1_candidate(cand);
  const Tensor t_norm = p.ln1_target(tgt);
  const Tensor attended = multi_head_attention(p.mhca, c_norm, t_norm, c_norm);
  const Tensor y1 = add(cand, dropout(attended, p.dropout_p, rng, training));
  const Tensor h = silu(p.mlp_hidden(silu(p.mlp_in(p.ln2(y1)))));
  return RegionFeature{add(y1, p.mlp_out(h))};
}

RegionFeature fuse_views(std::span<const RegionFeature> views, const SpatialBlockParams& params,
                         Rng& rng, bool training) {
  if (views.empty()) throw PreconditionError("fuse_views: no views");
  if (views.size() == 1) return views.front();
  Tensor total = views.front().tokens;
  for (std::size_t i = 1; i < views.size(); ++i) {
    total = add(total, spatial_block(views[i], views.front(), params, rng, training).tokens);
  }
  return RegionFeature{scale(total, 1.0 / static_cast<double>(views.size()))};
}

LatentQuery build_latent_queries(const RegionFeature& fused, const LatentQueryParams& params) {
  const Tensor attended =
      multi_head_attention(params.attention, params.bank, fused.tokens, fused.tokens);
  return LatentQuery{params.to_llm(attended)};
}

SpatialAwareness::SpatialAwareness(ParameterStore& store, const SpatialConfig& config)
    : config_(config) {
  const std::string b = "spatial-awareness/block";
  const std::size_t d = config.dim, hdim = config.mlp_hidden;
  block_.ln1_target = make_layer_norm(store, b + ".ln1_target", d);
  block_.ln1_candidate = make_layer_norm(store, b + ".ln1_candidate", d);
  block_.ln2 = make_layer_norm(store, b + ".ln2", d);
  block_.mhca = make_attention(store, b + ".mhca", d, d, d, d, config.heads, true, true);
  block_.mlp_in = make_linear(store, b + ".mlp_in", d, hdim);
  block_.mlp_hidden = make_linear(store, b + ".mlp_hidden", hdim, hdim);
  block_.mlp_out = make_linear(store, b + ".mlp_out", hdim, d, true, true);
  block_.dropout_p = config.dropout_p;

  const std::string q = "spatial-awareness/latent";
  latent_.bank = store.uniform(q + ".bank", {config.num_queries, d}, 1.0);
  latent_.attention = make_attention(store, q + ".attention", d, d, d, d, config.heads);
  latent_.to_llm = make_linear(store, q + ".to_llm", d, config.llm_dim);
}

RegionFeature SpatialAwareness::view_features(const SceneInput& scene, const BBox& view,
                                              const FrozenVisionEncoder& encoder) const {
  const PatchWindow window = patch_window(view, scene.grid);
  const FeatureMap fm = encoder.encode(crop_scene(scene, view));
  return roi_align(fm, window.to_local(view, scene.grid), config_.roi_size,
                   config_.sampling_ratio);
}

LatentQuery SpatialAwareness::forward(const SceneInput& scene,
                                      std::span<const CandidateView> views,
                                      const FrozenVisionEncoder& encoder, Rng& rng,
                                      bool training) const {
  std::vector<RegionFeature> features;
  features.reserve(views.size());
  for (const CandidateView& v : views) features.push_back(view_features(scene, v.bbox, encoder));
  return build_latent_queries(fuse_views(features, block_, rng, training), latent_);
}

}  // namespace aligncap
