#pragma once

#include <cstddef>
#include <span>

#include "aligncap/encoders.hpp"
#include "aligncap/god.hpp"
#include "aligncap/nn.hpp"
#include "aligncap/parameter.hpp"
#include "aligncap/rng.hpp"

namespace aligncap {

/// P*P RoI-aligned tokens of one view, [P*P, D_v].
struct RegionFeature {
  Tensor tokens;
};

/// Learned prefix for the LLM, [M, D_llm].
struct LatentQuery {
  Tensor queries;
};

struct SpatialConfig {
  std::size_t dim = 32;          // D_v
  std::size_t roi_size = 7;      // P
  std::size_t sampling_ratio = 2;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 64;   // H
  std::size_t num_queries = 8;   // M
  std::size_t llm_dim = 48;      // D_llm
  double dropout_p = 0.1;
};

struct SpatialBlockParams {
  LayerNorm ln1_target;
  LayerNorm ln1_candidate;
  LayerNorm ln2;
  AttentionParams mhca;  // output projection starts at zero
  Linear mlp_in;         // D_v -> H
  Linear mlp_hidden;     // H -> H
  Linear mlp_out;        // H -> D_v, starts at zero
  double dropout_p = 0.0;
};

struct LatentQueryParams {
  Tensor bank;  // [M, D_v]
  AttentionParams attention;
  Linear to_llm;
};

/// Bilinear RoI pooling. The box is mapped to continuous grid coordinates
/// (patch centers at i + 0.5); each of the P x P bins averages
/// sampling_ratio^2 samples at regular offsets inside the bin.
RegionFeature roi_align(const FeatureMap& fm, const BBox& box, std::size_t roi_size,
                        std::size_t sampling_ratio);

/// c' = LN(candidate), t' = LN(target)
/// a  = MHCA(Q = c', K = t', V = c')
/// y1 = candidate + dropout(a)
/// out = y1 + MLP(LN(y1))
RegionFeature spatial_block(const RegionFeature& candidate, const RegionFeature& target,
                            const SpatialBlockParams& params, Rng& rng, bool training);

/// views[0] is the target. Every other view runs through spatial_block
/// against the target; the outputs and the target are averaged token-wise.
RegionFeature fuse_views(std::span<const RegionFeature> views, const SpatialBlockParams& params,
                         Rng& rng, bool training);

/// Query bank cross-attends over the fused tokens, then maps to D_llm.
LatentQuery build_latent_queries(const RegionFeature& fused, const LatentQueryParams& params);

/// Trainable parameters of the spatial-awareness stage.
class SpatialAwareness {
 public:
  SpatialAwareness(ParameterStore& store, const SpatialConfig& config);

  const SpatialConfig& config() const { return config_; }
  const SpatialBlockParams& block() const { return block_; }
  const LatentQueryParams& latent() const { return latent_; }

  /// Crops the scene to the view, encodes the crop and RoI-aligns the view
  /// box inside it.
  RegionFeature view_features(const SceneInput& scene, const BBox& view,
                              const FrozenVisionEncoder& encoder) const;

  /// view_features for every view, fuse_views, build_latent_queries.
  LatentQuery forward(const SceneInput& scene, std::span<const CandidateView> views,
                      const FrozenVisionEncoder& encoder, Rng& rng, bool training) const;

 private:
  SpatialConfig config_;
  SpatialBlockParams block_;
  LatentQueryParams latent_;
};

}  // namespace aligncap
