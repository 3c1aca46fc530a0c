#include "aligncap/semantic.hpp"

#include <fmt/format.h>

#include "aligncap/ops.hpp"

namespace aligncap {

Tensor embed_tags_llm(std::span<const std::string> tags, const LLMStub& llm) {
  std::vector<TokenId> ids;
  for (const std::string& tag : tags) {
    for (TokenId id : llm.vocabulary().word_ids(tag)) ids.push_back(id);
  }
  return llm.embed_tokens(ids);
}

Tensor fuse_multimodal(const LatentQuery& queries, const Tensor& tag_emb, const Linear& proj) {
  const Tensor& q = queries.queries;
  if (q.cols() != proj.in_features() || tag_emb.cols() != proj.in_features()) {
    throw ShapeError(fmt::format("fuse_multimodal: queries {} and tags {} vs projection input {}",
                                 shape_to_string(q.shape()), shape_to_string(tag_emb.shape()),
                                 proj.in_features()));
  }
  if (tag_emb.rows() == 0) return proj(q);
  const Tensor parts[] = {q, tag_emb};
  return proj(concat_rows(parts));
}

Tensor caption_llm_embedding(std::string_view caption, const LLMStub& llm) {
  return llm.embed_tokens(llm.tokenize(caption));
}

SemanticAlignment::SemanticAlignment(ParameterStore& store, const SemanticConfig& config)
    : config_(config) {
  const std::string n = "semantic-alignment";
  proj_ = make_linear(store, n + "/fusion_proj", config.llm_dim, config.llm_dim);
  head_ = make_similarity_head(store, n + "/head", config.llm_dim, config.llm_dim,
                               config.score_dim, config.heads);
  loss_ = make_sigmoid_loss_params(store, n + "/sigmoid", config.tau_init, config.bias_init);
}

Tensor SemanticAlignment::similarity(std::span<const Tensor> unified,
                                     std::span<const Tensor> captions) const {
  return pairwise_similarity(unified, captions, head_);
}

Tensor SemanticAlignment::l_multi(std::span<const Tensor> unified,
                                  std::span<const Tensor> captions) const {
  return sigmoid_pair_loss(similarity(unified, captions), pair_labels(unified.size()), loss_);
}

}  // namespace aligncap
