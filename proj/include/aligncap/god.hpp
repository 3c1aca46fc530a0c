#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aligncap/encoders.hpp"
#include "aligncap/rng.hpp"
#include "aligncap/tensor.hpp"

// General object detection (GOD) preprocessing: rank detected classes by
// frequency, merge same-class boxes with the target region into candidate
// views, sample views for training, and pick the most discrepant view at
// inference.

namespace aligncap {

/// Box in normalized image coordinates; x runs along grid columns, y along rows.
struct BBox {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  /// Throws ValidationError unless 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1.
  static BBox make(double x0, double y0, double x1, double y1);
  static BBox full() { return BBox{}; }

  bool valid() const;
  double area() const { return (x1 - x0) * (y1 - y0); }
  bool contains(const BBox& other) const;
  bool operator==(const BBox&) const = default;
};

/// Parses "x0,y0,x1,y1".
BBox parse_bbox(std::string_view text);
std::string format_bbox(const BBox& box);

struct Detection {
  std::string class_name;
  BBox bbox;
  double score = 1.0;
};

struct CandidateView {
  BBox bbox;
  std::string source_class;
  bool is_target = false;
};

enum class DiscrepancyMode { FeatureCosine, OneMinusIou };

DiscrepancyMode parse_discrepancy_mode(std::string_view text);
std::string_view to_string(DiscrepancyMode mode);

struct GodConfig {
  std::size_t k = 2;  // top classes kept
  std::size_t j = 3;  // total views, target included
  DiscrepancyMode discrepancy_mode = DiscrepancyMode::FeatureCosine;

  void validate() const;
};

/// Classes by descending count, ties by ascending name, truncated to k.
std::vector<std::string> rank_classes(std::span<const Detection> detections, std::size_t k);

/// Coordinate envelope of the target and every class box.
BBox merge_view(const BBox& target, std::span<const BBox> class_boxes);

/// [target view] followed by j-1 views sampled from per-class envelopes.
///
/// For each top-k class, j-1 random non-empty subsets of that class's boxes
/// are merged with the target; duplicate envelopes are dropped. The j-1
/// candidates are drawn uniformly without replacement from that pool (with
/// replacement when the pool is smaller). Without detections the result is
/// j copies of the target.
std::vector<CandidateView> build_candidates(const BBox& target,
                                            std::span<const Detection> detections,
                                            const GodConfig& config, Rng& rng);

double iou(const BBox& a, const BBox& b);

/// Patch-aligned window of a crop: rows [r0, r1), cols [c0, c1).
struct PatchWindow {
  std::size_t r0, r1, c0, c1;

  /// Re-expresses `box` in the window's own normalized frame.
  BBox to_local(const BBox& box, std::size_t grid) const;
};

PatchWindow patch_window(const BBox& box, std::size_t grid);

/// Crops the scene to the patch window covering `box` and re-rasterizes it
/// to G x G by nearest-patch replication.
SceneInput crop_scene(const SceneInput& scene, const BBox& box);

struct SelectedView {
  CandidateView view;
  double discrepancy = 0.0;
};

double view_discrepancy(const BBox& view, const BBox& target, const SceneInput& scene,
                        const FrozenVisionEncoder& encoder, DiscrepancyMode mode);

/// Argmax of the discrepancy from the target; ties go to the earliest view.
SelectedView select_inference_view(std::span<const CandidateView> candidates, const BBox& target,
                                   const SceneInput& scene, const FrozenVisionEncoder& encoder,
                                   DiscrepancyMode mode);

/// JSON array of {"class": str, "bbox": [x0,y0,x1,y1], "score": float}.
std::vector<Detection> parse_detections(std::string_view text);
std::vector<Detection> load_detections(const std::filesystem::path& path);

}  // namespace aligncap
