#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "aligncap/encoders.hpp"
#include "aligncap/god.hpp"
#include "aligncap/refinement.hpp"

namespace aligncap {

struct SyntheticExample {
  SceneInput scene;
  BBox target;
  std::vector<Detection> detections;
  std::vector<std::string> tags;  // ground-truth tags: entity, attribute, action, scene
  std::string caption;

  /// Multi-hot [1, V_tag] row over `vocab`.
  Tensor tag_labels(const TagVocabulary& vocab) const;
};

/// Fixed per-tag channel pattern used to plant tags into scene rasters.
std::vector<double> tag_signature(std::string_view tag, std::size_t channels);

/// "a <attribute> <entity> <action> in the <scene>"
std::string caption_from_tags(std::string_view attribute, std::string_view entity,
                              std::string_view action, std::string_view scene);

/// Every word a caption can contain (template words plus tags).
std::vector<std::string> caption_words(const TagVocabulary& tags);

/// LLM vocabulary: caption words first, then filler up to `size`.
Vocabulary make_llm_vocabulary(const TagVocabulary& tags, std::size_t size);

/// Seeded examples with planted structure. The target box carries the sum
/// of its four tag signatures; detection boxes carry half their class
/// signature; everything else is low-amplitude noise.
std::vector<SyntheticExample> make_synthetic_dataset(std::uint64_t seed, std::size_t size,
                                                     std::size_t grid, std::size_t channels,
                                                     const TagVocabulary& tags);

/// Dataset document: {"examples": [...]} or {"generate": {"seed", "size"}}.
/// The generate form needs grid/channels from the caller.
std::vector<SyntheticExample> parse_dataset(std::string_view text, std::size_t grid,
                                            std::size_t channels, const TagVocabulary& tags);
std::vector<SyntheticExample> load_dataset(const std::filesystem::path& path, std::size_t grid,
                                           std::size_t channels, const TagVocabulary& tags);
void save_dataset(const std::filesystem::path& path, const std::vector<SyntheticExample>& data);

}  // namespace aligncap
