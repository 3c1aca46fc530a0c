#include "aligncap/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "aligncap/ops.hpp"

namespace aligncap {

Tensor tagging_loss(const Tensor& logits, const Tensor& labels) {
  if (logits.shape() != labels.shape()) {
    throw ShapeError(fmt::format("tagging_loss: logits {} vs labels {}",
                                 shape_to_string(logits.shape()), shape_to_string(labels.shape())));
  }
  return mean(sub(softplus(logits), mul(labels, logits)));
}

Tensor captioning_loss(const Tensor& prefix, std::span<const TokenId> caption_tokens,
                       const LLMStub& llm) {
  // <bos> w... <eos>: at least one word is needed for a meaningful target.
  if (caption_tokens.size() < 3) {
    throw PreconditionError("captioning_loss: caption has no words");
  }
  const auto inputs = caption_tokens.first(caption_tokens.size() - 1);
  const auto targets = caption_tokens.subspan(1);
  return cross_entropy(llm.decode_logits(prefix, inputs), targets);
}

Tensor total_loss(const Tensor& l_tag, const Tensor& l_cap, const Tensor& l_cond,
                  const Tensor& l_multi, const LossWeights& w) {
  const std::pair<const Tensor*, const char*> parts[] = {
      {&l_tag, "l_tag"}, {&l_cap, "l_cap"}, {&l_cond, "l_cond"}, {&l_multi, "l_multi"}};
  for (const auto& [t, name] : parts) {
    if (t->numel() != 1) throw ShapeError(fmt::format("total_loss: {} is not a scalar", name));
    if (!std::isfinite(t->item())) {
      throw NumericError(fmt::format("loss component {} is not finite ({})", name, t->item()));
    }
  }
  return add(add(scale(l_tag, w.alpha), scale(l_cap, w.beta)),
             add(scale(l_cond, w.gamma), scale(l_multi, w.lambda)));
}

LossValues LossBreakdown::values() const {
  return {l_tag.item(), l_cap.item(), l_cond.item(), l_multi.item(), total.item()};
}

namespace {

SpatialConfig spatial_config(const TrainingConfig& c) {
  const ModelDims& d = c.dims;
  return {d.d_v, d.p, d.sampling_ratio, d.h, d.mlp_hidden, d.m, d.d_llm, c.dropout_p};
}

RefinementConfig refinement_config(const TrainingConfig& c) {
  const ModelDims& d = c.dims;
  return {d.d_llm, d.d_t, d.d_c, d.d_s, d.h, c.tau_init, c.bias_init};
}

SemanticConfig semantic_config(const TrainingConfig& c) {
  const ModelDims& d = c.dims;
  return {d.d_llm, d.d_s, d.h, c.tau_init, c.bias_init};
}

const TrainingConfig& validated(const TrainingConfig& c) {
  c.validate();
  return c;
}

}  // namespace

AlignCapModel::AlignCapModel(const TrainingConfig& config, TagVocabulary tags)
    : config_(validated(config)),
      tags_(std::move(tags)),
      store_(config.seed),
      vision_(store_, config.dims.grid, config.dims.channels, config.dims.d_v),
      text_(store_, config.dims.v_llm, config.dims.d_t),
      llm_(store_, make_llm_vocabulary(tags_, config.dims.v_llm), config.dims.d_llm, config.dims.h),
      spatial_(store_, spatial_config(config)),
      refinement_(store_, refinement_config(config),
                  build_tag_table(tags_, llm_.vocabulary(), text_)),
      semantic_(store_, semantic_config(config)),
      tag_head_(make_linear(store_, "losses-training/tag_head", config.dims.d_c, tags_.size())) {}

std::vector<CandidateView> AlignCapModel::views_for(const BBox& target,
                                                    std::span<const Detection> detections,
                                                    const SceneInput& scene, Rng& rng,
                                                    bool training) const {
  auto candidates = build_candidates(target, detections, config_.god, rng);
  if (training) return candidates;
  const SelectedView pick =
      select_inference_view(candidates, target, scene, vision_, config_.god.discrepancy_mode);
  return {candidates.front(), pick.view};
}

LossBreakdown AlignCapModel::forward(std::span<const SyntheticExample> batch, const Rng& rng,
                                     bool training) const {
  if (batch.empty()) throw PreconditionError("forward: empty batch");
  const Vocabulary& vocab = llm_.vocabulary();
  std::vector<ConditionedFeatures> t, c;
  std::vector<Tensor> unified, captions, tag_losses, cap_losses;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const SyntheticExample& ex = batch[i];
    Rng ex_rng = rng.split(i);
    Rng view_rng = ex_rng.split("views");
    Rng drop_rng = ex_rng.split("dropout");
    const auto views = views_for(ex.target, ex.detections, ex.scene, view_rng, training);
    const LatentQuery q = spatial_.forward(ex.scene, views, vision_, drop_rng, training);

    t.push_back(refinement_.tagging_features(q.queries));
    c.push_back(refinement_.caption_features(q.queries,
                                             text_.encode(vocab.word_ids(ex.caption)).tokens));
    tag_losses.push_back(tagging_loss(tag_head_(mean_rows(t.back().tokens)), ex.tag_labels(tags_)));

    const Tensor e = semantic_.unified(q, embed_tags_llm(ex.tags, llm_));
    cap_losses.push_back(captioning_loss(e, vocab.tokenize(ex.caption), llm_));
    unified.push_back(e);
    captions.push_back(caption_llm_embedding(ex.caption, llm_));
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossBreakdown out;
  out.l_tag = scale(sum(stack_scalars(tag_losses, {tag_losses.size()})), inv_n);
  out.l_cap = scale(sum(stack_scalars(cap_losses, {cap_losses.size()})), inv_n);
  out.l_cond = refinement_.l_cond(t, c);
  out.l_multi = semantic_.l_multi(unified, captions);
  out.total = total_loss(out.l_tag, out.l_cap, out.l_cond, out.l_multi, config_.weights);
  return out;
}

CaptionPrediction AlignCapModel::caption(const SceneInput& scene, const BBox& target,
                                         std::span<const Detection> detections,
                                         std::size_t top_k, std::size_t max_tokens,
                                         const Rng& rng) const {
  if (scene.grid != config_.dims.grid || scene.channels != config_.dims.channels) {
    throw ShapeError(fmt::format("scene is {}x{}x{}, model expects {}x{}x{}", scene.grid,
                                 scene.grid, scene.channels, config_.dims.grid, config_.dims.grid,
                                 config_.dims.channels));
  }
  Rng view_rng = rng.split("views");
  Rng drop_rng = rng.split("dropout");
  const auto views = views_for(target, detections, scene, view_rng, false);
  const LatentQuery q = spatial_.forward(scene, views, vision_, drop_rng, false);
  const Tensor logits = tag_head_(mean_rows(refinement_.tagging_features(q.queries).tokens));

  std::vector<std::size_t> order(tags_.size());
  std::iota(order.begin(), order.end(), 0);
  const auto l = logits.data();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return l[a] > l[b]; });
  CaptionPrediction out;
  out.view = views.back();
  for (std::size_t i = 0; i < std::min(top_k, order.size()); ++i) {
    out.tags.push_back(tags_[order[i]].tag);
  }
  const Tensor e = semantic_.unified(q, embed_tags_llm(out.tags, llm_));
  out.tokens = llm_.generate(e, max_tokens);
  out.caption = llm_.vocabulary().detokenize(out.tokens);
  return out;
}

}  // namespace aligncap
