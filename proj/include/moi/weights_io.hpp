#pragma once

// TLM/1 weight files.
//
// Line 1 is a JSON header:
//   {"format":"TLM/1","config":{vocab,dim,heads,layers,context,init_seed,logit_scale},
//    "tensors":[{"name","shape","dtype":"f32","offset"}, ...]}
// followed by the raw little-endian float32 payload of each tensor, row-major,
// in manifest order. `offset` counts bytes from the first payload byte.

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "moi/error.hpp"
#include "moi/toy_lm.hpp"

namespace moi {

inline constexpr const char* kWeightFormat = "TLM/1";

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace detail

inline void save_weights(const Model& model, const std::string& path) {
  const auto& c = model.config();
  nlohmann::json header;
  header["format"] = kWeightFormat;
  header["config"] = {{"vocab", c.vocab}, {"dim", c.dim},         {"heads", c.heads},
                      {"layers", c.layers}, {"context", c.context}, {"init_seed", c.init_seed},
                      {"logit_scale", c.logit_scale}};
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  const auto tensors = model.tensors();
  for (const auto& [spec, values] : tensors) {
    header["tensors"].push_back(
        {{"name", spec.name}, {"shape", spec.shape}, {"dtype", "f32"}, {"offset", offset}});
    offset += values.size() * sizeof(float);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << header.dump() << '\n';
  for (const auto& [spec, values] : tensors) {
    for (float v : values) {
      const std::uint32_t le = detail::to_little_endian(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&le), sizeof le);
    }
  }
  if (!out) throw Error("write to '" + path + "' failed");
}

inline Model load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open weight file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("weight file '" + path + "' has no header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("weight header is not valid JSON: " + std::string(e.what()));
  }

  ModelConfig config;
  try {
    if (header.at("format").get<std::string>() != kWeightFormat) {
      throw ParseError("unsupported weight format '" + header.at("format").get<std::string>() + "'");
    }
    const auto& c = header.at("config");
    config.vocab = c.at("vocab").get<std::size_t>();
    config.dim = c.at("dim").get<std::size_t>();
    config.heads = c.at("heads").get<std::size_t>();
    config.layers = c.at("layers").get<std::size_t>();
    config.context = c.at("context").get<std::size_t>();
    config.init_seed = c.value("init_seed", std::uint64_t{0});
    config.logit_scale = c.value("logit_scale", 1.0f);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed weight header: " + std::string(e.what()));
  }
  config.validate();

  const auto manifest = tensor_manifest(config);
  const auto entries = header.value("tensors", nlohmann::json::array());
  if (!entries.is_array() || entries.size() != manifest.size()) {
    throw ParseError("weight header lists " + std::to_string(entries.size()) + " tensors, expected " +
                     std::to_string(manifest.size()));
  }

  const std::streamoff payload_start = in.tellg();
  Model::TensorMap tensors;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& expected = manifest[i].first;
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t offset = 0;
    try {
      name = entries[i].at("name").get<std::string>();
      shape = entries[i].at("shape").get<std::vector<std::size_t>>();
      offset = entries[i].at("offset").get<std::uint64_t>();
      if (entries[i].value("dtype", std::string("f32")) != "f32") {
        throw ParseError("tensor '" + name + "' has unsupported dtype");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("malformed manifest entry " + std::to_string(i) + ": " + e.what());
    }
    if (name != expected.name) {
      throw ParseError("tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                       expected.name + "'");
    }
    if (shape != expected.shape) {
      std::ostringstream msg;
      msg << "tensor '" << name << "' shape [";
      for (std::size_t k = 0; k < shape.size(); ++k) msg << (k ? "," : "") << shape[k];
      msg << "] does not match config [";
      for (std::size_t k = 0; k < expected.shape.size(); ++k) msg << (k ? "," : "") << expected.shape[k];
      msg << "]";
      throw ShapeError(msg.str());
    }

    std::vector<float> values(expected.numel());
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    for (float& v : values) {
      std::uint32_t le = 0;
      if (!in.read(reinterpret_cast<char*>(&le), sizeof le)) {
        throw ParseError("weight file truncated inside tensor '" + name + "'");
      }
      v = std::bit_cast<float>(detail::to_little_endian(le));
    }
    tensors.emplace(name, std::move(values));
  }
  return Model(config, std::move(tensors));
}

}  // namespace moi
