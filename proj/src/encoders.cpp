#include "aligncap/encoders.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "aligncap/ops.hpp"

namespace aligncap {

using nlohmann::json;

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const std::string& w = words_[i];
    if (w.empty() || w.find_first_of(" \t\r\n") != std::string::npos) {
      throw TokenizationError(fmt::format("vocabulary word {} is empty or has whitespace", i));
    }
    if (w != normalize_text(w)) {
      throw TokenizationError(fmt::format("vocabulary word '{}' is not lowercase", w));
    }
    if (!index_.emplace(w, i + kReserved).second) {
      throw TokenizationError(fmt::format("duplicate vocabulary word '{}'", w));
    }
  }
}

Vocabulary Vocabulary::with_filler(std::span<const std::string> required, std::size_t total_size) {
  std::vector<std::string> words;
  std::unordered_map<std::string, bool> seen;
  for (const std::string& w : required) {
    if (seen.emplace(w, true).second) words.push_back(w);
  }
  if (words.size() + kReserved > total_size) {
    throw PreconditionError(fmt::format("vocabulary size {} cannot hold {} required words",
                                        total_size, words.size()));
  }
  for (std::size_t i = words.size() + kReserved; i < total_size; ++i) {
    words.push_back(fmt::format("tok{:04}", i));
  }
  return Vocabulary(std::move(words));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open vocabulary file {}", path.string()));
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    std::string w = normalize_text(line);
    if (!w.empty()) words.push_back(std::move(w));
  }
  return Vocabulary(std::move(words));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  for (const std::string& w : words_) out << w << '\n';
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::word(TokenId id) const {
  static const std::string reserved[] = {"<unk>", "<bos>", "<eos>"};
  if (id < kReserved) return reserved[id];
  if (id >= size()) throw TokenizationError(fmt::format("token id {} out of range", id));
  return words_[id - kReserved];
}

std::vector<TokenId> Vocabulary::word_ids(std::string_view text) const {
  std::vector<TokenId> ids;
  std::istringstream in(normalize_text(text));
  std::string w;
  while (in >> w) ids.push_back(find(w).value_or(kUnk));
  return ids;
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
  std::vector<TokenId> ids{kBos};
  for (TokenId id : word_ids(text)) ids.push_back(id);
  ids.push_back(kEos);
  return ids;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < kReserved) continue;
    if (!out.empty()) out.push_back(' ');
    out += word(id);
  }
  return out;
}

SceneInput SceneInput::from_values(std::size_t grid, std::size_t channels,
                                   std::vector<double> values, std::string provenance) {
  SceneInput s;
  s.grid = grid;
  s.channels = channels;
  s.pixels = Tensor({grid * grid, channels}, std::move(values));
  s.provenance = std::move(provenance);
  return s;
}

SceneInput SceneInput::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open scene file {}", path.string()));
  const json doc = json::parse(in);
  const auto shape = doc.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3 || shape[0] != shape[1] || shape[0] == 0 || shape[2] == 0) {
    throw ShapeError(fmt::format("scene shape must be [G,G,C], got {}", shape_to_string(shape)));
  }
  return from_values(shape[0], shape[2], doc.at("values").get<std::vector<double>>(),
                     path.string());
}

void SceneInput::save(const std::filesystem::path& path) const {
  const json doc = {{"shape", {grid, grid, channels}},
                    {"values", std::vector<double>(pixels.data().begin(), pixels.data().end())}};
  std::ofstream(path) << doc.dump() << '\n';
}

FrozenVisionEncoder::FrozenVisionEncoder(ParameterStore& store, std::size_t grid,
                                         std::size_t channels, std::size_t dim)
    : grid_(grid), channels_(channels), dim_(dim) {
  input_ = make_linear(store, "frozen-vision/fc1", channels, dim, false);
  output_ = make_linear(store, "frozen-vision/fc2", dim, dim, false);
  position_ = store.uniform("frozen-vision/position", {grid * grid, dim}, 0.5, false);
}

FeatureMap FrozenVisionEncoder::encode(const SceneInput& scene) const {
  if (scene.grid != grid_ || scene.channels != channels_) {
    throw ShapeError(fmt::format("scene is {}x{}x{}, encoder expects {}x{}x{}", scene.grid,
                                 scene.grid, scene.channels, grid_, grid_, channels_));
  }
  return encode(scene.pixels);
}

FeatureMap FrozenVisionEncoder::encode(const Tensor& pixels) const {
  if (pixels.rank() != 2 || pixels.rows() != grid_ * grid_ || pixels.cols() != channels_) {
    throw ShapeError(fmt::format("encoder input {} does not match [{}, {}]",
                                 shape_to_string(pixels.shape()), grid_ * grid_, channels_));
  }
  const Tensor hidden = tanh(add(input_(pixels), position_));
  return FeatureMap{output_(hidden), grid_};
}

FrozenTextEncoder::FrozenTextEncoder(ParameterStore& store, std::size_t vocab_size,
                                     std::size_t dim)
    : vocab_size_(vocab_size), dim_(dim) {
  table_ = store.uniform("frozen-text/embedding", {vocab_size, dim}, 1.0, false);
  transform_ = make_linear(store, "frozen-text/transform", dim, dim, false);
}

TextEncoding FrozenTextEncoder::encode(std::span<const TokenId> ids) const {
  if (ids.empty()) throw PreconditionError("encode_text: empty token sequence");
  for (TokenId id : ids) {
    if (id >= vocab_size_) {
      throw TokenizationError(fmt::format("token id {} >= text vocabulary size {}", id, vocab_size_));
    }
  }
  const Tensor tokens = tanh(transform_(gather_rows(table_, ids)));
  return TextEncoding{tokens, mean_rows(tokens)};
}

Tensor sinusoidal_positions(std::size_t rows, std::size_t dim) {
  std::vector<double> v(rows * dim);
  for (std::size_t p = 0; p < rows; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      v[p * dim + i] = (i % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq);
    }
  }
  return Tensor({rows, dim}, std::move(v));
}

LLMStub::LLMStub(ParameterStore& store, Vocabulary vocab, std::size_t dim, std::size_t heads)
    : vocab_(std::move(vocab)), dim_(dim) {
  embedding_ = store.uniform("frozen-llm/embedding", {vocab_.size(), dim}, 1.0, false);
  norm_in_ = make_layer_norm(store, "frozen-llm/norm_in", dim, false);
  attention_ = make_attention(store, "frozen-llm/attention", dim, dim, dim, dim, heads, false);
  norm_out_ = make_layer_norm(store, "frozen-llm/norm_out", dim, false);
  head_ = make_linear(store, "frozen-llm/head", dim, vocab_.size(), false);
}

Tensor LLMStub::embed_tokens(std::span<const TokenId> ids) const {
  if (ids.empty()) return Tensor::zeros({0, dim_});
  return gather_rows(embedding_, ids);
}

Tensor LLMStub::decode_logits(const Tensor& prefix, std::span<const TokenId> input_ids) const {
  if (prefix.cols() != dim_) {
    throw ShapeError(fmt::format("decode_logits: prefix width {} != LLM width {}", prefix.cols(),
                                 dim_));
  }
  if (input_ids.empty()) return Tensor::zeros({0, vocab_.size()});
  const std::size_t m = prefix.rows();
  const Tensor tokens = embed_tokens(input_ids);
  Tensor x = tokens;
  if (m > 0) {
    const Tensor parts[] = {prefix, tokens};
    x = concat_rows(parts);
  }
  x = add(x, sinusoidal_positions(x.rows(), dim_));
  const Tensor normed = norm_in_(x);
  const Tensor h = add(x, multi_head_attention(attention_, normed, normed, normed, true));
  const Tensor targets = m > 0 ? slice_rows(h, m, h.rows()) : h;
  return head_(norm_out_(targets));
}

std::vector<TokenId> LLMStub::generate(const Tensor& prefix, std::size_t max_tokens) const {
  std::vector<TokenId> context{Vocabulary::kBos};
  std::vector<TokenId> produced;
  const Tensor frozen_prefix = prefix.detach();
  while (produced.size() < max_tokens) {
    const Tensor logits = decode_logits(frozen_prefix, context);
    const std::size_t last = logits.rows() - 1;
    const auto row = logits.data().subspan(last * logits.cols(), logits.cols());
    // <unk> and <bos> are never emitted.
    TokenId best = Vocabulary::kEos;
    for (TokenId id = Vocabulary::kReserved; id < row.size(); ++id) {
      if (row[id] > row[best]) best = id;
    }
    if (best == Vocabulary::kEos) break;
    produced.push_back(best);
    context.push_back(best);
  }
  return produced;
}

}  // namespace aligncap
