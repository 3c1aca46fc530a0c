#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aligncap/config.hpp"
#include "aligncap/dataset.hpp"
#include "aligncap/encoders.hpp"
#include "aligncap/god.hpp"
#include "aligncap/refinement.hpp"
#include "aligncap/semantic.hpp"
#include "aligncap/spatial.hpp"

namespace aligncap {

/// Mean per-tag binary cross-entropy with logits:
/// (1/V) sum_v softplus(l_v) - y_v * l_v.
Tensor tagging_loss(const Tensor& logits, const Tensor& labels);

/// Teacher-forced next-token cross-entropy of the caption given the prefix.
/// `caption_tokens` includes <bos> and <eos>; position t predicts t+1.
Tensor captioning_loss(const Tensor& prefix, std::span<const TokenId> caption_tokens,
                       const LLMStub& llm);

/// alpha*l_tag + beta*l_cap + gamma*l_cond + lambda*l_multi. Throws
/// NumericError naming the first non-finite component.
Tensor total_loss(const Tensor& l_tag, const Tensor& l_cap, const Tensor& l_cond,
                  const Tensor& l_multi, const LossWeights& w);

struct LossValues {
  double l_tag = 0.0, l_cap = 0.0, l_cond = 0.0, l_multi = 0.0, total = 0.0;
};

struct LossBreakdown {
  Tensor l_tag, l_cap, l_cond, l_multi, total;

  LossValues values() const;
};

struct CaptionPrediction {
  CandidateView view;                 // inference-selected context view
  std::vector<std::string> tags;      // top-k by tagging logit
  std::vector<TokenId> tokens;
  std::string caption;
};

/// Every frozen stub and trainable module, all parameters in one store.
class AlignCapModel {
 public:
  explicit AlignCapModel(const TrainingConfig& config,
                         TagVocabulary tags = TagVocabulary::builtin());
  AlignCapModel(const AlignCapModel&) = delete;
  AlignCapModel& operator=(const AlignCapModel&) = delete;

  const TrainingConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const TagVocabulary& tags() const { return tags_; }
  const LLMStub& llm() const { return llm_; }
  const FrozenVisionEncoder& vision() const { return vision_; }
  const FrozenTextEncoder& text() const { return text_; }
  const SpatialAwareness& spatial() const { return spatial_; }
  const LatentRefinement& refinement() const { return refinement_; }
  const SemanticAlignment& semantic() const { return semantic_; }
  const Linear& tag_head() const { return tag_head_; }

  /// Training: [target] + j-1 sampled views. Inference: [target, the most
  /// discrepant candidate].
  std::vector<CandidateView> views_for(const BBox& target, std::span<const Detection> detections,
                                       const SceneInput& scene, Rng& rng, bool training) const;

  /// Full pipeline on a batch. `rng` is split per example; dropout is active
  /// only when `training`.
  LossBreakdown forward(std::span<const SyntheticExample> batch, const Rng& rng,
                        bool training) const;

  CaptionPrediction caption(const SceneInput& scene, const BBox& target,
                            std::span<const Detection> detections, std::size_t top_k,
                            std::size_t max_tokens, const Rng& rng) const;

 private:
  TrainingConfig config_;
  TagVocabulary tags_;
  ParameterStore store_;
  FrozenVisionEncoder vision_;
  FrozenTextEncoder text_;
  LLMStub llm_;
  SpatialAwareness spatial_;
  LatentRefinement refinement_;
  SemanticAlignment semantic_;
  Linear tag_head_;
};

}  // namespace aligncap
