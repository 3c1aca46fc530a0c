#include "aligncap/refinement.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "aligncap/ops.hpp"

namespace aligncap {

TagSubclass parse_tag_subclass(std::string_view text) {
  if (text == "entity") return TagSubclass::Entity;
  if (text == "attribute") return TagSubclass::Attribute;
  if (text == "action") return TagSubclass::Action;
  if (text == "scene") return TagSubclass::Scene;
  throw ValidationError(fmt::format("unknown tag subclass '{}'", text));
}

std::string_view to_string(TagSubclass subclass) {
  switch (subclass) {
    case TagSubclass::Entity: return "entity";
    case TagSubclass::Attribute: return "attribute";
    case TagSubclass::Action: return "action";
    case TagSubclass::Scene: return "scene";
  }
  return "entity";
}

TagVocabulary::TagVocabulary(std::vector<Entry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw ValidationError("tag vocabulary is empty");
  std::set<std::string> seen;
  for (const Entry& e : entries_) {
    if (e.tag.empty() || e.tag != normalize_text(e.tag) || e.tag.find(' ') != std::string::npos) {
      throw ValidationError(fmt::format("tag '{}' must be one lowercase word", e.tag));
    }
    if (!seen.insert(e.tag).second) throw ValidationError(fmt::format("duplicate tag '{}'", e.tag));
  }
}

TagVocabulary TagVocabulary::builtin() {
  static const char* const entity[] = {"person", "dog",  "cat",   "horse",  "bird",  "car",
                                       "bus",    "bicycle", "boat", "tree", "chair", "table",
                                       "cup",    "bottle", "phone", "book"};
  static const char* const attribute[] = {"red",   "blue",  "green",  "yellow", "black", "white",
                                          "brown", "small", "large",  "old",    "young", "wooden",
                                          "metal", "striped", "shiny", "wet"};
  static const char* const action[] = {"running",  "sitting", "standing", "walking",
                                       "jumping",  "eating",  "sleeping", "flying",
                                       "swimming", "parked",  "reading",  "holding",
                                       "looking",  "playing", "driving",  "resting"};
  static const char* const scene[] = {"park",  "street", "beach",  "kitchen", "forest", "field",
                                      "room",  "river",  "road",   "city",    "garden", "snow",
                                      "stadium", "market", "office", "harbor"};
  std::vector<Entry> entries;
  for (const char* t : entity) entries.push_back({t, TagSubclass::Entity});
  for (const char* t : attribute) entries.push_back({t, TagSubclass::Attribute});
  for (const char* t : action) entries.push_back({t, TagSubclass::Action});
  for (const char* t : scene) entries.push_back({t, TagSubclass::Scene});
  return TagVocabulary(std::move(entries));
}

TagVocabulary TagVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open tag file {}", path.string()));
  std::vector<Entry> entries;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (normalize_text(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(fmt::format("{}:{}: expected tag<TAB>subclass", path.string(), n));
    }
    try {
      entries.push_back({line.substr(0, tab), parse_tag_subclass(normalize_text(line.substr(tab + 1)))});
    } catch (const ValidationError& e) {
      throw ParseError(fmt::format("{}:{}: {}", path.string(), n, e.what()));
    }
  }
  return TagVocabulary(std::move(entries));
}

void TagVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  for (const Entry& e : entries_) out << e.tag << '\t' << to_string(e.subclass) << '\n';
}

std::size_t TagVocabulary::index_of(std::string_view tag) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].tag == tag) return i;
  }
  throw ValidationError(fmt::format("unknown tag '{}'", tag));
}

std::vector<std::string> TagVocabulary::tags_of(TagSubclass subclass) const {
  std::vector<std::string> out;
  for (const Entry& e : entries_) {
    if (e.subclass == subclass) out.push_back(e.tag);
  }
  return out;
}

Tensor build_tag_table(const TagVocabulary& tags, const Vocabulary& vocab,
                       const FrozenTextEncoder& encoder) {
  std::vector<Tensor> rows;
  rows.reserve(tags.size());
  for (const auto& e : tags.entries()) {
    rows.push_back(encoder.encode(vocab.word_ids(e.tag)).pooled);
  }
  return concat_rows(rows).detach();
}

Tensor adapt_tags(const Tensor& table, const Linear& adapter) {
  if (table.cols() != adapter.in_features()) {
    throw ShapeError(fmt::format("adapt_tags: table width {} vs adapter input {}", table.cols(),
                                 adapter.in_features()));
  }
  return adapter(table);
}

ConditionedFeatures condition_on_image(const Tensor& image_tokens, const Tensor& context_tokens,
                                       const ConditioningParams& params,
                                       ConditionedFeatures::Kind kind) {
  if (context_tokens.rank() != 2 || context_tokens.rows() == 0) {
    throw PreconditionError("condition_on_image: empty context");
  }
  const Tensor img = params.image_proj(image_tokens);
  const Tensor ctx = params.context_proj(context_tokens);
  return ConditionedFeatures{add(img, multi_head_attention(params.attention, img, ctx, ctx)), kind};
}

SimilarityHeadParams make_similarity_head(ParameterStore& store, const std::string& name,
                                          std::size_t query_dim, std::size_t context_dim,
                                          std::size_t score_dim, std::size_t heads) {
  SimilarityHeadParams h;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::string layer = fmt::format("{}.layer{}", name, i);
    h.layers[i].attention = make_attention(store, layer + ".attention", query_dim, context_dim,
                                           query_dim, query_dim, heads);
    h.layers[i].norm = make_layer_norm(store, layer + ".norm", query_dim);
  }
  h.final_norm = make_layer_norm(store, name + ".final_norm", query_dim);
  h.pair_proj = make_linear(store, name + ".pair_proj", query_dim, score_dim);
  h.context_proj = make_linear(store, name + ".context_proj", context_dim, score_dim);
  return h;
}

namespace {

// Per-column quantities that do not depend on the query side.
struct ContextCache {
  Tensor keys[2];
  Tensor values[2];
  Tensor pooled;  // v_j, [1, D_s]
};

ContextCache prepare_context(const Tensor& context, const SimilarityHeadParams& head) {
  if (context.rank() != 2 || context.rows() == 0) {
    throw PreconditionError("pairwise_similarity: empty context sequence");
  }
  ContextCache c;
  for (std::size_t i = 0; i < 2; ++i) {
    c.keys[i] = head.layers[i].attention.key(context);
    c.values[i] = head.layers[i].attention.value(context);
  }
  c.pooled = head.context_proj(mean_rows(context));
  return c;
}

Tensor score_with_cache(const Tensor& query, const ContextCache& c,
                        const SimilarityHeadParams& head) {
  Tensor x = query;
  for (std::size_t i = 0; i < 2; ++i) {
    const AttentionParams& a = head.layers[i].attention;
    const Tensor attended = a.output(attend(a.query(x), c.keys[i], c.values[i], a.heads));
    x = head.layers[i].norm(add(x, attended));
  }
  const Tensor u = head.pair_proj(mean_rows(head.final_norm(x)));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head.pair_proj.out_features()));
  return scale(dot(u, c.pooled), inv_sqrt);
}

}  // namespace

Tensor pair_score(const Tensor& query_tokens, const Tensor& context_tokens,
                  const SimilarityHeadParams& head) {
  return score_with_cache(query_tokens, prepare_context(context_tokens, head), head);
}

Tensor pairwise_similarity(std::span<const Tensor> queries, std::span<const Tensor> contexts,
                           const SimilarityHeadParams& head) {
  if (queries.empty() || queries.size() != contexts.size()) {
    throw PreconditionError(fmt::format("pairwise_similarity: {} queries vs {} contexts",
                                        queries.size(), contexts.size()));
  }
  const std::size_t n = queries.size();
  std::vector<ContextCache> cache;
  cache.reserve(n);
  for (const Tensor& c : contexts) cache.push_back(prepare_context(c, head));
  std::vector<Tensor> scores;
  scores.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) scores.push_back(score_with_cache(queries[i], cache[j], head));
  }
  return stack_scalars(scores, {n, n});
}

SigmoidLossParams make_sigmoid_loss_params(ParameterStore& store, const std::string& name,
                                           double tau, double bias, bool trainable) {
  if (!(tau > 0.0)) throw ValidationError(fmt::format("{}: tau must be positive", name));
  return SigmoidLossParams{store.constant(name + ".tau_log", {1}, std::log(tau), trainable),
                           store.constant(name + ".bias", {1}, bias, trainable)};
}

Tensor pair_labels(std::size_t n) {
  Tensor z = Tensor::full({n, n}, -1.0);
  auto d = z.mutable_data();
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
  return z;
}

Tensor sigmoid_pair_loss(const Tensor& scores, const Tensor& labels, const SigmoidLossParams& p) {
  if (scores.shape() != labels.shape() || scores.rank() != 2) {
    throw ShapeError(fmt::format("sigmoid_pair_loss: scores {} vs labels {}",
                                 shape_to_string(scores.shape()), shape_to_string(labels.shape())));
  }
  const Tensor tau = exp(p.tau_log);
  const Tensor logits = mul(labels, add(scale(mul(scores, tau), -1.0), p.bias));
  return scale(sum(softplus(logits)), 1.0 / static_cast<double>(scores.rows()));
}

LatentRefinement::LatentRefinement(ParameterStore& store, const RefinementConfig& config,
                                   Tensor tag_table)
    : config_(config) {
  const std::string n = "latent-refinement";
  if (tag_table.cols() != config.text_dim) {
    throw ShapeError(fmt::format("tag table width {} != text dim {}", tag_table.cols(),
                                 config.text_dim));
  }
  tag_table_ = store.adopt(n + "/tag_table", std::move(tag_table), false);
  adapter_ = make_linear(store, n + "/adapter", config.text_dim, config.dim);
  const std::size_t d = config.dim;
  tag_cond_.image_proj = make_linear(store, n + "/tag_condition.image_proj", config.image_dim, d);
  tag_cond_.context_proj = make_linear(store, n + "/tag_condition.context_proj", d, d);
  tag_cond_.attention =
      make_attention(store, n + "/tag_condition.attention", d, d, d, d, config.heads);
  caption_cond_.image_proj =
      make_linear(store, n + "/caption_condition.image_proj", config.image_dim, d);
  caption_cond_.context_proj =
      make_linear(store, n + "/caption_condition.context_proj", config.text_dim, d);
  caption_cond_.attention =
      make_attention(store, n + "/caption_condition.attention", d, d, d, d, config.heads);
  head_ = make_similarity_head(store, n + "/head", d, d, config.score_dim, config.heads);
  loss_ = make_sigmoid_loss_params(store, n + "/sigmoid", config.tau_init, config.bias_init);
}

ConditionedFeatures LatentRefinement::tagging_features(const Tensor& image_tokens) const {
  return condition_on_image(image_tokens, adapted_tags(), tag_cond_,
                            ConditionedFeatures::Kind::Tagging);
}

ConditionedFeatures LatentRefinement::caption_features(const Tensor& image_tokens,
                                                       const Tensor& caption_tokens) const {
  return condition_on_image(image_tokens, caption_tokens, caption_cond_,
                            ConditionedFeatures::Kind::Caption);
}

Tensor LatentRefinement::similarity(std::span<const ConditionedFeatures> t,
                                    std::span<const ConditionedFeatures> c) const {
  std::vector<Tensor> q, k;
  for (const auto& f : t) q.push_back(f.tokens);
  for (const auto& f : c) k.push_back(f.tokens);
  return pairwise_similarity(q, k, head_);
}

Tensor LatentRefinement::l_cond(std::span<const ConditionedFeatures> t,
                                std::span<const ConditionedFeatures> c) const {
  return sigmoid_pair_loss(similarity(t, c), pair_labels(t.size()), loss_);
}

}  // namespace aligncap
