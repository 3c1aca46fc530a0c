#include "aligncap/god.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <json.hpp>

#include "aligncap/ops.hpp"

namespace aligncap {

using nlohmann::json;

bool BBox::valid() const {
  auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  return in_unit(x0) && in_unit(y0) && in_unit(x1) && in_unit(y1) && x0 < x1 && y0 < y1;
}

BBox BBox::make(double x0, double y0, double x1, double y1) {
  BBox b{x0, y0, x1, y1};
  if (!b.valid()) throw ValidationError(fmt::format("invalid box {}", format_bbox(b)));
  return b;
}

bool BBox::contains(const BBox& o) const {
  return x0 <= o.x0 && y0 <= o.y0 && x1 >= o.x1 && y1 >= o.y1;
}

BBox parse_bbox(std::string_view text) {
  std::vector<double> v;
  std::stringstream in{std::string(text)};
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (part.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("bad box coordinate '{}' in '{}'", part, text));
    }
  }
  if (v.size() != 4) throw ValidationError(fmt::format("box '{}' needs 4 coordinates", text));
  return BBox::make(v[0], v[1], v[2], v[3]);
}

std::string format_bbox(const BBox& b) {
  return fmt::format("[{},{},{},{}]", b.x0, b.y0, b.x1, b.y1);
}

DiscrepancyMode parse_discrepancy_mode(std::string_view text) {
  if (text == "feature-cosine") return DiscrepancyMode::FeatureCosine;
  if (text == "one-minus-iou") return DiscrepancyMode::OneMinusIou;
  throw ValidationError(fmt::format("unknown discrepancy mode '{}'", text));
}

std::string_view to_string(DiscrepancyMode mode) {
  return mode == DiscrepancyMode::FeatureCosine ? "feature-cosine" : "one-minus-iou";
}

void GodConfig::validate() const {
  if (k < 1) throw ValidationError("GOD config: k must be >= 1");
  if (j < 2) throw ValidationError("GOD config: j must be >= 2");
}

std::vector<std::string> rank_classes(std::span<const Detection> detections, std::size_t k) {
  if (k < 1) throw PreconditionError("rank_classes: k must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const Detection& d : detections) ++counts[d.class_name];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already name-ascending; stable sort keeps that for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].first);
  return out;
}

BBox merge_view(const BBox& target, std::span<const BBox> class_boxes) {
  if (class_boxes.empty()) throw PreconditionError("merge_view: no class boxes");
  if (!target.valid()) throw ValidationError(fmt::format("invalid target {}", format_bbox(target)));
  BBox out = target;
  for (const BBox& b : class_boxes) {
    if (!b.valid()) throw ValidationError(fmt::format("invalid box {}", format_bbox(b)));
    out.x0 = std::min(out.x0, b.x0);
    out.y0 = std::min(out.y0, b.y0);
    out.x1 = std::max(out.x1, b.x1);
    out.y1 = std::max(out.y1, b.y1);
  }
  return out;
}

std::vector<CandidateView> build_candidates(const BBox& target,
                                            std::span<const Detection> detections,
                                            const GodConfig& config, Rng& rng) {
  config.validate();
  if (!target.valid()) throw ValidationError(fmt::format("invalid target {}", format_bbox(target)));
  const std::size_t wanted = config.j - 1;
  std::vector<CandidateView> views{CandidateView{target, "target", true}};

  if (detections.empty()) {
    spdlog::debug("GOD: no detections, using {} copies of the target view", config.j);
    for (std::size_t i = 0; i < wanted; ++i) views.push_back(CandidateView{target, "target", false});
    return views;
  }

  std::vector<CandidateView> pool;
  for (const std::string& cls : rank_classes(detections, config.k)) {
    std::vector<BBox> boxes;
    for (const Detection& d : detections) {
      if (d.class_name == cls) boxes.push_back(d.bbox);
    }
    for (std::size_t s = 0; s < wanted; ++s) {
      std::vector<BBox> subset;
      while (subset.empty()) {
        for (const BBox& b : boxes) {
          if (rng.bernoulli(0.5)) subset.push_back(b);
        }
      }
      const BBox env = merge_view(target, subset);
      const bool duplicate = std::any_of(pool.begin(), pool.end(),
                                         [&](const CandidateView& v) { return v.bbox == env; });
      if (!duplicate) pool.push_back(CandidateView{env, cls, false});
    }
  }

  if (pool.size() >= wanted) {
    // Partial Fisher-Yates: the first `wanted` slots form the sample.
    for (std::size_t i = 0; i < wanted; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
      views.push_back(pool[i]);
    }
  } else {
    for (std::size_t i = 0; i < wanted; ++i) views.push_back(pool[rng.below(pool.size())]);
  }
  return views;
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double ih = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

// Small tolerance so coordinates like 0.3 * 10 land on the intended patch.
constexpr double kSnap = 1e-9;

std::pair<std::size_t, std::size_t> patch_span(double lo, double hi, std::size_t grid) {
  const double g = static_cast<double>(grid);
  std::size_t a = static_cast<std::size_t>(std::max(0.0, std::floor(lo * g + kSnap)));
  std::size_t b = static_cast<std::size_t>(std::max(0.0, std::ceil(hi * g - kSnap)));
  a = std::min(a, grid - 1);
  b = std::clamp(b, a + 1, grid);
  return {a, b};
}

}  // namespace

PatchWindow patch_window(const BBox& box, std::size_t grid) {
  const auto [c0, c1] = patch_span(box.x0, box.x1, grid);
  const auto [r0, r1] = patch_span(box.y0, box.y1, grid);
  return PatchWindow{r0, r1, c0, c1};
}

BBox PatchWindow::to_local(const BBox& box, std::size_t grid) const {
  const double g = static_cast<double>(grid);
  auto local = [g](double v, std::size_t lo, std::size_t hi) {
    const double t = (v * g - static_cast<double>(lo)) / static_cast<double>(hi - lo);
    return std::clamp(t, 0.0, 1.0);
  };
  return BBox{local(box.x0, c0, c1), local(box.y0, r0, r1), local(box.x1, c0, c1),
              local(box.y1, r0, r1)};
}

SceneInput crop_scene(const SceneInput& scene, const BBox& box) {
  const std::size_t g = scene.grid;
  const PatchWindow w = patch_window(box, g);
  RowMix mix;
  mix.terms.resize(g * g);
  for (std::size_t i = 0; i < g; ++i) {
    const std::size_t src_r = w.r0 + i * (w.r1 - w.r0) / g;
    for (std::size_t j = 0; j < g; ++j) {
      const std::size_t src_c = w.c0 + j * (w.c1 - w.c0) / g;
      mix.terms[i * g + j] = {{src_r * g + src_c, 1.0}};
    }
  }
  SceneInput out;
  out.grid = g;
  out.channels = scene.channels;
  out.pixels = mix_rows(scene.pixels, mix);
  out.provenance = scene.provenance;
  return out;
}

double view_discrepancy(const BBox& view, const BBox& target, const SceneInput& scene,
                        const FrozenVisionEncoder& encoder, DiscrepancyMode mode) {
  if (mode == DiscrepancyMode::OneMinusIou) return 1.0 - iou(view, target);
  if (view == target) return 0.0;
  const Tensor a = mean_rows(encoder.encode(crop_scene(scene, view)).features);
  const Tensor b = mean_rows(encoder.encode(crop_scene(scene, target)).features);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    ab += a.data()[i] * b.data()[i];
    aa += a.data()[i] * a.data()[i];
    bb += b.data()[i] * b.data()[i];
  }
  const double denom = std::sqrt(aa) * std::sqrt(bb);
  return denom > 0.0 ? 1.0 - ab / denom : 1.0;
}

SelectedView select_inference_view(std::span<const CandidateView> candidates, const BBox& target,
                                   const SceneInput& scene, const FrozenVisionEncoder& encoder,
                                   DiscrepancyMode mode) {
  if (candidates.empty()) throw PreconditionError("select_inference_view: no candidates");
  SelectedView best{candidates.front(),
                    view_discrepancy(candidates.front().bbox, target, scene, encoder, mode)};
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double d = view_discrepancy(candidates[i].bbox, target, scene, encoder, mode);
    if (d > best.discrepancy) best = SelectedView{candidates[i], d};
  }
  return best;
}

namespace {

// Line number (1-based) at which each top-level array element starts.
std::vector<std::size_t> element_lines(std::string_view text) {
  std::vector<std::size_t> lines;
  std::size_t line = 1;
  int depth = 0;
  bool in_string = false, escaped = false;
  for (char c : text) {
    if (c == '\n') ++line;
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    if (c == '{' || c == '[') {
      if (depth == 1) lines.push_back(line);
      ++depth;
    } else if (c == '}' || c == ']') {
      --depth;
    } else if (depth == 1 && !std::isspace(static_cast<unsigned char>(c)) && c != ',') {
      // Scalar element at top level; record its line once.
      if (lines.empty() || lines.back() != line) lines.push_back(line);
    }
  }
  return lines;
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

}  // namespace

std::vector<Detection> parse_detections(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("detections: syntax error at line {}: {}",
                                 line_of_offset(text, e.byte), e.what()));
  }
  if (!doc.is_array()) throw ParseError("detections: line 1: top-level value must be an array");
  const auto lines = element_lines(text);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::size_t line = i < lines.size() ? lines[i] : 0;
    const json& e = doc[i];
    try {
      Detection d;
      d.class_name = e.at("class").get<std::string>();
      const auto box = e.at("bbox").get<std::vector<double>>();
      d.score = e.contains("score") ? e.at("score").get<double>() : 1.0;
      if (d.class_name.empty()) throw ValidationError("empty class name");
      if (box.size() != 4) throw ValidationError("bbox needs 4 coordinates");
      if (!(d.score >= 0.0 && d.score <= 1.0)) throw ValidationError("score outside [0,1]");
      d.bbox = BBox::make(box[0], box[1], box[2], box[3]);
      out.push_back(std::move(d));
    } catch (const std::exception& ex) {
      throw ParseError(fmt::format("detections: line {}: entry {}: {}", line, i, ex.what()));
    }
  }
  return out;
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open detection file {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_detections(buf.str());
}

}  // namespace aligncap
