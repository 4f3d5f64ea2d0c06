#pragma once

// Checkpoint = JSON manifest + raw little-endian float32 blob. The blob
// holds, layer by layer, weight, bias, gamma, beta, running_mean and
// running_var (whichever the layer has).

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "neosleep/nn/model.hpp"

namespace neosleep::nn {

namespace checkpoint_detail {

inline void for_each_tensor(auto& m, auto&& f) {
  for (auto& l : m.layers)
    for (auto* v : {&l.weight, &l.bias, &l.gamma, &l.beta, &l.running_mean, &l.running_var})
      if (!v->empty()) f(*v);
}

inline std::string to_bytes(const ModelParams<float>& m) {
  std::string out;
  for_each_tensor(m, [&](const std::vector<float>& v) {
    for (float x : v) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  });
  return out;
}

inline std::uint32_t crc(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace checkpoint_detail

inline nlohmann::ordered_json specs_to_json(const std::vector<LayerSpec>& specs) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : specs) {
    nlohmann::ordered_json j;
    j["kind"] = std::string(to_string(s.kind));
    switch (s.kind) {
      case LayerKind::conv1d: j["in"] = s.in; j["out"] = s.out; j["kernel"] = s.kernel; break;
      case LayerKind::batchnorm: j["channels"] = s.in; break;
      case LayerKind::maxpool: j["pool"] = s.pool; break;
      case LayerKind::dropout: j["rate"] = s.rate; break;
      case LayerKind::dense: j["in"] = s.in; j["out"] = s.out; break;
      default: break;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::vector<LayerSpec> specs_from_json(const nlohmann::json& arr) {
  std::vector<LayerSpec> specs;
  for (const auto& j : arr) {
    const LayerKind kind = layer_kind_from_string(j.at("kind").get<std::string>());
    switch (kind) {
      case LayerKind::conv1d: specs.push_back(LayerSpec::conv1d(j.at("in"), j.at("out"), j.at("kernel"))); break;
      case LayerKind::batchnorm: specs.push_back(LayerSpec::batchnorm(j.at("channels"))); break;
      case LayerKind::relu: specs.push_back(LayerSpec::relu()); break;
      case LayerKind::maxpool: specs.push_back(LayerSpec::maxpool(j.at("pool"))); break;
      case LayerKind::global_avg_pool: specs.push_back(LayerSpec::global_avg_pool()); break;
      case LayerKind::dropout: specs.push_back(LayerSpec::dropout(j.at("rate"))); break;
      case LayerKind::dense: specs.push_back(LayerSpec::dense(j.at("in"), j.at("out"))); break;
      case LayerKind::softmax: specs.push_back(LayerSpec::softmax()); break;
    }
  }
  return specs;
}

/// Writes `<stem>.json` and `<stem>.bin`.
inline void save_checkpoint(const std::string& stem, const ModelParams<float>& m,
                            const nlohmann::ordered_json& training_metadata = nlohmann::ordered_json::object()) {
  const std::string blob = checkpoint_detail::to_bytes(m);
  nlohmann::ordered_json j;
  j["format"] = "neosleep-checkpoint";
  j["version"] = 1;
  j["input"] = {{"channels", m.input.channels}, {"length", m.input.length}};
  j["layers"] = specs_to_json(m.specs);
  j["seed"] = m.seed;
  j["total_params"] = m.total_params();
  j["blob"] = {{"file", std::filesystem::path(stem + ".bin").filename().string()},
               {"floats", blob.size() / 4},
               {"crc32", checkpoint_detail::crc(blob)}};
  j["training"] = training_metadata;
  {
    std::ofstream out(stem + ".bin", std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot write " + stem + ".bin");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  std::ofstream out(stem + ".json");
  if (!out) throw Error(Errc::io, "cannot write " + stem + ".json");
  out << j.dump(2) << '\n';
}

/// Loads a checkpoint given the path of its manifest (or its stem).
inline ModelParams<float> load_checkpoint(std::string manifest_path) {
  if (manifest_path.size() < 5 || manifest_path.substr(manifest_path.size() - 5) != ".json") manifest_path += ".json";
  std::ifstream in(manifest_path);
  if (!in) throw Error(Errc::io, "cannot open " + manifest_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::checksum_mismatch, manifest_path + ": " + e.what());
  }
  const auto specs = specs_from_json(j.at("layers"));
  const Shape input{j.at("input").at("channels").get<int>(), j.at("input").at("length").get<int>()};
  ModelParams<float> m = build_model<float>(specs, j.at("seed").get<std::uint64_t>(), input);
  if (j.at("total_params").get<std::size_t>() != count_params(specs))
    throw Error(Errc::shape_mismatch, "manifest parameter count disagrees with its layer list");

  const auto blob_path = std::filesystem::path(manifest_path).parent_path() / j.at("blob").at("file").get<std::string>();
  std::ifstream bin(blob_path, std::ios::binary);
  if (!bin) throw Error(Errc::io, "cannot open " + blob_path.string());
  const std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (blob.size() != 4 * j.at("blob").at("floats").get<std::size_t>() ||
      checkpoint_detail::crc(blob) != j.at("blob").at("crc32").get<std::uint32_t>())
    throw Error(Errc::checksum_mismatch, blob_path.string() + " does not match its manifest");

  std::size_t expected = 0;
  checkpoint_detail::for_each_tensor(m, [&](std::vector<float>& v) { expected += v.size(); });
  if (expected * 4 != blob.size()) throw Error(Errc::checksum_mismatch, "blob size does not fit the layer list");

  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  checkpoint_detail::for_each_tensor(m, [&](std::vector<float>& v) {
    for (float& x : v) {
      const std::uint32_t bits = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
      std::memcpy(&x, &bits, sizeof x);
      p += 4;
    }
  });
  return m;
}

}  // namespace neosleep::nn
