#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aligncap/nn.hpp"
#include "aligncap/parameter.hpp"
#include "aligncap/tensor.hpp"

// Deterministic stand-ins for the frozen pretrained components: a per-patch
// vision encoder, a text encoder, and a small causal LLM with its tokenizer.
// Every weight is registered as a frozen parameter; gradients flow through
// them to whatever produced their inputs.

namespace aligncap {

using TokenId = std::size_t;

class TokenizationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Lowercases and collapses runs of whitespace to single spaces.
std::string normalize_text(std::string_view text);

/// Word-level tokenizer over a fixed word list. Ids 0..2 are reserved for
/// <unk>, <bos> and <eos>; word i of the list gets id i + 3.
class Vocabulary {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr std::size_t kReserved = 3;

  explicit Vocabulary(std::vector<std::string> words);

  /// `required` words first (deduplicated, in order), then filler words
  /// "tok<N>" until the vocabulary holds `total_size` ids.
  static Vocabulary with_filler(std::span<const std::string> required, std::size_t total_size);
  /// One word per line; blank lines are skipped.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return kReserved + words_.size(); }
  std::optional<TokenId> find(std::string_view word) const;
  const std::string& word(TokenId id) const;
  std::span<const std::string> words() const { return words_; }

  /// [<bos>, words..., <eos>]; unknown words map to <unk>.
  std::vector<TokenId> tokenize(std::string_view text) const;
  /// Word ids only, no <bos>/<eos>.
  std::vector<TokenId> word_ids(std::string_view text) const;
  /// Joins word tokens with single spaces, skipping reserved ids.
  std::string detokenize(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

/// A G x G x C synthetic raster, stored as a [G*G, C] tensor (row-major
/// over the grid).
struct SceneInput {
  std::size_t grid = 0;
  std::size_t channels = 0;
  Tensor pixels;
  std::string provenance;

  static SceneInput from_values(std::size_t grid, std::size_t channels,
                                std::vector<double> values, std::string provenance = {});
  /// JSON document {"shape": [G, G, C], "values": [...]}.
  static SceneInput load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Per-patch features [G*G, D_v].
struct FeatureMap {
  Tensor features;
  std::size_t grid = 0;
};

/// tanh(x W1 + b1 + pos) W2 + b2 applied per patch, with a frozen learned-style
/// positional table so identical patches at different locations differ.
class FrozenVisionEncoder {
 public:
  FrozenVisionEncoder(ParameterStore& store, std::size_t grid, std::size_t channels,
                      std::size_t dim);

  FeatureMap encode(const SceneInput& scene) const;
  /// Pixels [G*G, C]; may carry gradient from upstream.
  FeatureMap encode(const Tensor& pixels) const;

  std::size_t grid() const { return grid_; }
  std::size_t channels() const { return channels_; }
  std::size_t dim() const { return dim_; }

 private:
  std::size_t grid_, channels_, dim_;
  Linear input_, output_;
  Tensor position_;
};

struct TextEncoding {
  Tensor tokens;  // [L, D_t]
  Tensor pooled;  // [1, D_t], mean of the token rows
};

/// Per-token tanh(E[id] W + b); pooled output is the mean over tokens.
class FrozenTextEncoder {
 public:
  FrozenTextEncoder(ParameterStore& store, std::size_t vocab_size, std::size_t dim);

  TextEncoding encode(std::span<const TokenId> ids) const;
  std::size_t dim() const { return dim_; }

 private:
  std::size_t vocab_size_, dim_;
  Tensor table_;
  Linear transform_;
};

/// Frozen causal LM: embedding table, one pre-norm causal self-attention
/// block, final norm and an output head over the vocabulary. Sinusoidal
/// positions are added to the concatenation [prefix; token embeddings].
class LLMStub {
 public:
  LLMStub(ParameterStore& store, Vocabulary vocab, std::size_t dim, std::size_t heads);

  const Vocabulary& vocabulary() const { return vocab_; }
  std::size_t dim() const { return dim_; }
  std::size_t vocab_size() const { return vocab_.size(); }

  std::vector<TokenId> tokenize(std::string_view text) const { return vocab_.tokenize(text); }
  Tensor embed_tokens(std::span<const TokenId> ids) const;

  /// Row t holds next-token logits after reading prefix and input_ids[0..t].
  /// Result is [len(input_ids), V]; empty input gives a [0, V] tensor.
  Tensor decode_logits(const Tensor& prefix, std::span<const TokenId> input_ids) const;

  /// Greedy decoding from <bos>; stops at <eos> or after `max_tokens`
  /// generated words. Returns the generated word ids (no <bos>/<eos>).
  std::vector<TokenId> generate(const Tensor& prefix, std::size_t max_tokens) const;

 private:
  Vocabulary vocab_;
  std::size_t dim_;
  Tensor embedding_;
  LayerNorm norm_in_, norm_out_;
  AttentionParams attention_;
  Linear head_;
};

/// Fixed sinusoidal position table [rows, dim].
Tensor sinusoidal_positions(std::size_t rows, std::size_t dim);

}  // namespace aligncap
