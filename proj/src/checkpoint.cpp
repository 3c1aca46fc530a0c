#include "aligncap/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

namespace aligncap {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'A', 'L', 'C', 'K', 'P', 'T', '0', '1'};

std::array<unsigned char, 8> le_bytes(std::uint64_t x) {
  std::array<unsigned char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  return b;
}

std::uint64_t from_le(const unsigned char* b) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return x;
}

std::vector<unsigned char> payload_bytes(std::span<const double> values) {
  std::vector<unsigned char> out;
  out.reserve(values.size() * 8);
  for (double v : values) {
    const auto b = le_bytes(std::bit_cast<std::uint64_t>(v));
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::span<const double> values) {
  const auto bytes = payload_bytes(values);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw CheckpointError("sha256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

void write_checkpoint(const std::filesystem::path& path, const AlignCapModel& model,
                      std::size_t step) {
  ordered_json manifest;
  manifest["format"] = "aligncap-checkpoint";
  manifest["step"] = step;
  manifest["config"] = json::parse(model.config().to_json_text());
  ordered_json params = ordered_json::array();
  std::vector<unsigned char> payload;
  std::size_t offset = 0;
  for (const Parameter& p : model.parameters().all()) {
    const auto values = p.tensor.data();
    params.push_back({{"name", p.name},
                      {"shape", p.tensor.shape()},
                      {"dtype", "float64"},
                      {"offset", offset},
                      {"trainable", p.trainable},
                      {"sha256", sha256_hex(values)}});
    const auto bytes = payload_bytes(values);
    payload.insert(payload.end(), bytes.begin(), bytes.end());
    offset += values.size();
  }
  manifest["params"] = std::move(params);
  const std::string text = manifest.dump();

  // Write beside the target and rename so a crash never leaves a torn file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(fmt::format("cannot write {}", tmp.string()));
    out.write(kMagic, sizeof kMagic);
    const auto len = le_bytes(text.size());
    out.write(reinterpret_cast<const char*>(len.data()), len.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw CheckpointError(fmt::format("short write to {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(fmt::format("cannot open checkpoint {}", path.string()));
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(fmt::format("{} is not a checkpoint", path.string()));
  }
  const std::uint64_t len = from_le(bytes.data() + 8);
  if (len > bytes.size() - 16) throw CheckpointError("checkpoint manifest is truncated");
  const std::size_t payload_at = 16 + len;
  const std::size_t payload_values = (bytes.size() - payload_at) / 8;
  if ((bytes.size() - payload_at) % 8 != 0) throw CheckpointError("checkpoint payload is ragged");

  Checkpoint ckpt;
  try {
    const json manifest = json::parse(bytes.begin() + 16, bytes.begin() + payload_at);
    ckpt.step = manifest.at("step").get<std::size_t>();
    ckpt.config = TrainingConfig::from_json_text(manifest.at("config").dump());
    for (const json& p : manifest.at("params")) {
      CheckpointTensor t;
      t.name = p.at("name").get<std::string>();
      t.shape = p.at("shape").get<Shape>();
      t.trainable = p.at("trainable").get<bool>();
      if (p.at("dtype").get<std::string>() != "float64") {
        throw CheckpointError(fmt::format("{}: unsupported dtype", t.name));
      }
      std::size_t n = 1;
      for (std::size_t d : t.shape) n *= d;
      const auto offset = p.at("offset").get<std::size_t>();
      if (offset > payload_values || n > payload_values - offset) {
        throw CheckpointError(fmt::format("{}: payload out of range", t.name));
      }
      t.values.resize(n);
      const unsigned char* base = bytes.data() + payload_at + offset * 8;
      for (std::size_t i = 0; i < n; ++i) {
        t.values[i] = std::bit_cast<double>(from_le(base + i * 8));
      }
      if (sha256_hex(t.values) != p.at("sha256").get<std::string>()) {
        throw CheckpointError(fmt::format("{}: hash mismatch", t.name));
      }
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(fmt::format("bad checkpoint manifest: {}", e.what()));
  } catch (const ValidationError& e) {
    throw CheckpointError(fmt::format("bad checkpoint config: {}", e.what()));
  } catch (const ParseError& e) {
    throw CheckpointError(fmt::format("bad checkpoint config: {}", e.what()));
  }
  return ckpt;
}

void apply_checkpoint(AlignCapModel& model, const Checkpoint& ckpt) {
  if (!(ckpt.config.dims == model.config().dims)) {
    throw IncompatibleCheckpoint("checkpoint dims differ from the model dims");
  }
  auto params = model.parameters().all();
  if (params.size() != ckpt.tensors.size()) {
    throw IncompatibleCheckpoint(fmt::format("checkpoint has {} tensors, model has {}",
                                             ckpt.tensors.size(), params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const CheckpointTensor& t = ckpt.tensors[i];
    Parameter& p = params[i];
    if (t.name != p.name || t.shape != p.tensor.shape() || t.trainable != p.trainable) {
      throw IncompatibleCheckpoint(fmt::format("checkpoint tensor {} {} does not match model {} {}",
                                               t.name, shape_to_string(t.shape), p.name,
                                               shape_to_string(p.tensor.shape())));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    std::copy(ckpt.tensors[i].values.begin(), ckpt.tensors[i].values.end(), dst.begin());
  }
}

}  // namespace aligncap
