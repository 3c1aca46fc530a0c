#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aligncap/encoders.hpp"
#include "aligncap/nn.hpp"
#include "aligncap/parameter.hpp"

namespace aligncap {

enum class TagSubclass { Entity, Attribute, Action, Scene };

TagSubclass parse_tag_subclass(std::string_view text);
std::string_view to_string(TagSubclass subclass);

/// Closed tag set the tagging head predicts over.
class TagVocabulary {
 public:
  struct Entry {
    std::string tag;
    TagSubclass subclass;
  };

  /// Throws ValidationError on an empty list, duplicate or multi-word tags.
  explicit TagVocabulary(std::vector<Entry> entries);

  /// Built-in 64-tag set, 16 per subclass.
  static TagVocabulary builtin();
  /// One `tag<TAB>subclass` per line.
  static TagVocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  std::span<const Entry> entries() const { return entries_; }
  /// Index of `tag`; throws ValidationError when absent.
  std::size_t index_of(std::string_view tag) const;
  std::vector<std::string> tags_of(TagSubclass subclass) const;

 private:
  std::vector<Entry> entries_;
};

/// Frozen V_tag x D_t table: pooled text encoding of each tag word.
Tensor build_tag_table(const TagVocabulary& tags, const Vocabulary& vocab,
                       const FrozenTextEncoder& encoder);

struct ConditionedFeatures {
  enum class Kind { Tagging, Caption };
  Tensor tokens;  // [L, D_c]
  Kind kind = Kind::Tagging;
};

/// Projections on both sides plus one cross-attention layer.
struct ConditioningParams {
  Linear image_proj;    // image width -> D_c
  Linear context_proj;  // context width -> D_c
  AttentionParams attention;
};

/// Trainable affine map of the frozen tag table.
Tensor adapt_tags(const Tensor& table, const Linear& adapter);

/// img = image_proj(image), ctx = context_proj(context)
/// out = img + MHA(Q = img, K = ctx, V = ctx)
ConditionedFeatures condition_on_image(const Tensor& image_tokens, const Tensor& context_tokens,
                                       const ConditioningParams& params,
                                       ConditionedFeatures::Kind kind);

struct SimilarityLayer {
  AttentionParams attention;
  LayerNorm norm;
};

/// Two stacked cross-attention layers, final norm, projections to the score
/// space. Used by both alignment losses with separate weights.
struct SimilarityHeadParams {
  SimilarityLayer layers[2];
  LayerNorm final_norm;
  Linear pair_proj;     // query width -> D_s
  Linear context_proj;  // context width -> D_s
};

SimilarityHeadParams make_similarity_head(ParameterStore& store, const std::string& name,
                                          std::size_t query_dim, std::size_t context_dim,
                                          std::size_t score_dim, std::size_t heads);

/// s_ij for one pair: queries T_i attend over C_j through both layers
/// (x <- LN(x + MHA(x, C_j, C_j))), then LN, mean-pool and pair_proj give
/// u_ij; v_j = context_proj(mean of C_j); s_ij = <u_ij, v_j> / sqrt(D_s).
Tensor pair_score(const Tensor& query_tokens, const Tensor& context_tokens,
                  const SimilarityHeadParams& head);

/// N x N matrix of pair_score(T_i, C_j). Context-side projections are
/// computed once per column.
Tensor pairwise_similarity(std::span<const Tensor> queries, std::span<const Tensor> contexts,
                           const SimilarityHeadParams& head);

struct SigmoidLossParams {
  Tensor tau_log;  // tau = exp(tau_log)
  Tensor bias;
};

SigmoidLossParams make_sigmoid_loss_params(ParameterStore& store, const std::string& name,
                                           double tau, double bias, bool trainable = true);

/// Z_ii = +1, Z_ij = -1 otherwise.
Tensor pair_labels(std::size_t n);

/// (1/N) sum_ij softplus(Z_ij * (-tau * s_ij + b)), summed row-major.
Tensor sigmoid_pair_loss(const Tensor& scores, const Tensor& labels, const SigmoidLossParams& p);

struct RefinementConfig {
  std::size_t image_dim = 48;  // width of the incoming image tokens
  std::size_t text_dim = 32;   // D_t
  std::size_t dim = 32;        // D_c
  std::size_t score_dim = 32;  // D_s
  std::size_t heads = 4;
  double tau_init = 10.0;
  double bias_init = 10.0;
};

/// Trainable parameters of the latent feature refinement stage plus the
/// frozen tag table.
class LatentRefinement {
 public:
  LatentRefinement(ParameterStore& store, const RefinementConfig& config, Tensor tag_table);

  const RefinementConfig& config() const { return config_; }
  const Tensor& tag_table() const { return tag_table_; }
  const Linear& adapter() const { return adapter_; }
  const ConditioningParams& tag_conditioning() const { return tag_cond_; }
  const ConditioningParams& caption_conditioning() const { return caption_cond_; }
  const SimilarityHeadParams& head() const { return head_; }
  const SigmoidLossParams& loss_params() const { return loss_; }

  Tensor adapted_tags() const { return adapt_tags(tag_table_, adapter_); }
  /// t_i: image tokens conditioned on the adapted tag table.
  ConditionedFeatures tagging_features(const Tensor& image_tokens) const;
  /// c_i: image tokens conditioned on the frozen caption encoding.
  ConditionedFeatures caption_features(const Tensor& image_tokens,
                                       const Tensor& caption_tokens) const;

  Tensor similarity(std::span<const ConditionedFeatures> t,
                    std::span<const ConditionedFeatures> c) const;
  Tensor l_cond(std::span<const ConditionedFeatures> t,
                std::span<const ConditionedFeatures> c) const;

 private:
  RefinementConfig config_;
  Tensor tag_table_;
  Linear adapter_;
  ConditioningParams tag_cond_;
  ConditioningParams caption_cond_;
  SimilarityHeadParams head_;
  SigmoidLossParams loss_;
};

}  // namespace aligncap
