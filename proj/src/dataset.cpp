#include "aligncap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace aligncap {

using nlohmann::json;

Tensor SyntheticExample::tag_labels(const TagVocabulary& vocab) const {
  std::vector<double> v(vocab.size(), 0.0);
  for (const std::string& t : tags) v[vocab.index_of(t)] = 1.0;
  return Tensor({1, vocab.size()}, std::move(v));
}

std::vector<double> tag_signature(std::string_view tag, std::size_t channels) {
  Rng rng = Rng(hash_name("tag-signature")).split(tag);
  std::vector<double> v(channels);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

std::string caption_from_tags(std::string_view attribute, std::string_view entity,
                              std::string_view action, std::string_view scene) {
  return fmt::format("a {} {} {} in the {}", attribute, entity, action, scene);
}

std::vector<std::string> caption_words(const TagVocabulary& tags) {
  std::vector<std::string> words{"a", "in", "the"};
  for (const auto& e : tags.entries()) words.push_back(e.tag);
  return words;
}

Vocabulary make_llm_vocabulary(const TagVocabulary& tags, std::size_t size) {
  return Vocabulary::with_filler(caption_words(tags), size);
}

namespace {

// Adds `amount * pattern` to every patch whose centre lies inside `box`; when
// the box is too thin to cover a centre, the patch under its midpoint is used.
void paint(std::vector<double>& px, std::size_t grid, std::size_t channels, const BBox& box,
           const std::vector<double>& pattern, double amount) {
  const double g = static_cast<double>(grid);
  bool any = false;
  for (std::size_t r = 0; r < grid; ++r) {
    const double cy = (static_cast<double>(r) + 0.5) / g;
    if (cy < box.y0 || cy >= box.y1) continue;
    for (std::size_t c = 0; c < grid; ++c) {
      const double cx = (static_cast<double>(c) + 0.5) / g;
      if (cx < box.x0 || cx >= box.x1) continue;
      any = true;
      for (std::size_t k = 0; k < channels; ++k) px[(r * grid + c) * channels + k] += amount * pattern[k];
    }
  }
  if (!any) {
    const auto r = std::min(grid - 1, static_cast<std::size_t>((box.y0 + box.y1) / 2 * g));
    const auto c = std::min(grid - 1, static_cast<std::size_t>((box.x0 + box.x1) / 2 * g));
    for (std::size_t k = 0; k < channels; ++k) px[(r * grid + c) * channels + k] += amount * pattern[k];
  }
}

BBox random_box(Rng& rng, double min_side, double max_side) {
  const double w = rng.uniform(min_side, max_side);
  const double h = rng.uniform(min_side, max_side);
  const double x0 = rng.uniform(0.0, 1.0 - w);
  const double y0 = rng.uniform(0.0, 1.0 - h);
  return BBox::make(x0, y0, std::min(1.0, x0 + w), std::min(1.0, y0 + h));
}

}  // namespace

std::vector<SyntheticExample> make_synthetic_dataset(std::uint64_t seed, std::size_t size,
                                                     std::size_t grid, std::size_t channels,
                                                     const TagVocabulary& tags) {
  if (size < 1) throw PreconditionError("make_synthetic_dataset: size must be >= 1");
  const auto entities = tags.tags_of(TagSubclass::Entity);
  const auto attributes = tags.tags_of(TagSubclass::Attribute);
  const auto actions = tags.tags_of(TagSubclass::Action);
  const auto scenes = tags.tags_of(TagSubclass::Scene);
  if (entities.empty() || attributes.empty() || actions.empty() || scenes.empty()) {
    throw ValidationError("synthetic data needs at least one tag of every subclass");
  }
  const Rng base = Rng(seed).split("synthetic-dataset");
  std::vector<SyntheticExample> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    Rng rng = base.split(i);
    SyntheticExample ex;
    const std::string& entity = entities[rng.below(entities.size())];
    const std::string& attribute = attributes[rng.below(attributes.size())];
    const std::string& action = actions[rng.below(actions.size())];
    const std::string& scene = scenes[rng.below(scenes.size())];
    ex.tags = {entity, attribute, action, scene};
    ex.caption = caption_from_tags(attribute, entity, action, scene);
    ex.target = random_box(rng, 0.25, 0.5);

    std::vector<double> px(grid * grid * channels);
    for (double& v : px) v = rng.uniform(-0.1, 0.1);

    // Detections: 2-5 boxes over at most 3 entity classes.
    std::vector<std::string> classes;
    const std::size_t n_classes = std::min<std::size_t>(1 + rng.below(3), entities.size());
    while (classes.size() < n_classes) {
      const std::string& c = entities[rng.below(entities.size())];
      if (std::find(classes.begin(), classes.end(), c) == classes.end()) classes.push_back(c);
    }
    const std::size_t n_dets = 2 + rng.below(4);
    for (std::size_t d = 0; d < n_dets; ++d) {
      Detection det;
      det.class_name = classes[rng.below(classes.size())];
      det.bbox = random_box(rng, 0.1, 0.3);
      det.score = rng.uniform(0.5, 1.0);
      paint(px, grid, channels, det.bbox, tag_signature(det.class_name, channels), 0.5);
      ex.detections.push_back(std::move(det));
    }

    std::vector<double> pattern(channels, 0.0);
    for (const std::string& t : ex.tags) {
      const auto sig = tag_signature(t, channels);
      for (std::size_t k = 0; k < channels; ++k) pattern[k] += sig[k];
    }
    paint(px, grid, channels, ex.target, pattern, 1.0);

    ex.scene = SceneInput::from_values(grid, channels, std::move(px),
                                       fmt::format("synthetic:{}:{}", seed, i));
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

json box_json(const BBox& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

BBox box_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw ValidationError("box needs 4 coordinates");
  return BBox::make(v[0], v[1], v[2], v[3]);
}

SyntheticExample example_from(const json& e, std::size_t grid, std::size_t channels,
                              const TagVocabulary& tags) {
  SyntheticExample ex;
  const auto shape = e.at("scene").at("shape").get<std::vector<std::size_t>>();
  if (shape != std::vector<std::size_t>{grid, grid, channels}) {
    throw ValidationError(fmt::format("scene shape {} does not match [{},{},{}]",
                                      shape_to_string(shape), grid, grid, channels));
  }
  ex.scene = SceneInput::from_values(grid, channels,
                                     e.at("scene").at("values").get<std::vector<double>>(), "file");
  ex.target = box_from(e.at("target"));
  for (const json& d : e.at("detections")) {
    ex.detections.push_back(
        {d.at("class").get<std::string>(), box_from(d.at("bbox")), d.value("score", 1.0)});
  }
  ex.tags = e.at("tags").get<std::vector<std::string>>();
  if (ex.tags.empty()) throw ValidationError("example needs at least one tag");
  for (const std::string& t : ex.tags) tags.index_of(t);
  ex.caption = e.at("caption").get<std::string>();
  if (normalize_text(ex.caption).empty()) throw ValidationError("example caption is empty");
  return ex;
}

}  // namespace

std::vector<SyntheticExample> parse_dataset(std::string_view text, std::size_t grid,
                                            std::size_t channels, const TagVocabulary& tags) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("dataset: {}", e.what()));
  }
  if (!doc.is_object()) throw ParseError("dataset: top-level value must be an object");
  if (doc.contains("generate")) {
    const json& g = doc.at("generate");
    return make_synthetic_dataset(g.at("seed").get<std::uint64_t>(), g.at("size").get<std::size_t>(),
                                  grid, channels, tags);
  }
  std::vector<SyntheticExample> out;
  const json& examples = doc.at("examples");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    try {
      out.push_back(example_from(examples[i], grid, channels, tags));
    } catch (const std::exception& e) {
      throw ParseError(fmt::format("dataset: example {}: {}", i, e.what()));
    }
  }
  return out;
}

std::vector<SyntheticExample> load_dataset(const std::filesystem::path& path, std::size_t grid,
                                           std::size_t channels, const TagVocabulary& tags) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open dataset file {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), grid, channels, tags);
}

void save_dataset(const std::filesystem::path& path, const std::vector<SyntheticExample>& data) {
  json examples = json::array();
  for (const SyntheticExample& ex : data) {
    json dets = json::array();
    for (const Detection& d : ex.detections) {
      dets.push_back({{"class", d.class_name}, {"bbox", box_json(d.bbox)}, {"score", d.score}});
    }
    examples.push_back(
        {{"scene",
          {{"shape", {ex.scene.grid, ex.scene.grid, ex.scene.channels}},
           {"values", std::vector<double>(ex.scene.pixels.data().begin(), ex.scene.pixels.data().end())}}},
         {"target", box_json(ex.target)},
         {"detections", dets},
         {"tags", ex.tags},
         {"caption", ex.caption}});
  }
  std::ofstream(path) << json{{"examples", examples}}.dump() << '\n';
}

}  // namespace aligncap
