#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "aligncap/encoders.hpp"
#include "aligncap/refinement.hpp"
#include "aligncap/spatial.hpp"

namespace aligncap {

/// LLM embeddings of the tag words, one row per word, in list order. No
/// <bos>/<eos> rows; an empty list gives a [0, D_llm] tensor.
Tensor embed_tags_llm(std::span<const std::string> tags, const LLMStub& llm);

/// proj([queries; tag_emb]), [M + L_tag, D_llm]. The first M rows come from
/// the latent queries.
Tensor fuse_multimodal(const LatentQuery& queries, const Tensor& tag_emb, const Linear& proj);

/// Frozen LLM embedding of a caption, <bos> and <eos> included.
Tensor caption_llm_embedding(std::string_view caption, const LLMStub& llm);

struct SemanticConfig {
  std::size_t llm_dim = 48;    // D_llm
  std::size_t score_dim = 32;  // D_s
  std::size_t heads = 4;
  double tau_init = 10.0;
  double bias_init = 10.0;
};

class SemanticAlignment {
 public:
  SemanticAlignment(ParameterStore& store, const SemanticConfig& config);

  const SemanticConfig& config() const { return config_; }
  const Linear& projection() const { return proj_; }
  const SimilarityHeadParams& head() const { return head_; }
  const SigmoidLossParams& loss_params() const { return loss_; }

  Tensor unified(const LatentQuery& queries, const Tensor& tag_emb) const {
    return fuse_multimodal(queries, tag_emb, proj_);
  }
  Tensor similarity(std::span<const Tensor> unified, std::span<const Tensor> captions) const;
  Tensor l_multi(std::span<const Tensor> unified, std::span<const Tensor> captions) const;

 private:
  SemanticConfig config_;
  Linear proj_;
  SimilarityHeadParams head_;
  SigmoidLossParams loss_;
};

}  // namespace aligncap
