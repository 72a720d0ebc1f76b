#pragma once

// Binary checkpoints: "VADETCK1", u64 header length, JSON header, raw float data.
// The header carries the model config, a tensor index and free-form metadata.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vadet/model.hpp"

namespace vadet::checkpoint {

inline constexpr char kMagic[8] = {'V', 'A', 'D', 'E', 'T', 'C', 'K', '1'};

inline std::string to_string(model::MemoryMode m) {
  return m == model::MemoryMode::per_layer ? "per_layer" : "prepended_slot";
}
inline std::string to_string(model::ClsPath c) { return c == model::ClsPath::zs_only ? "zs_only" : "mask_zw"; }
inline std::string to_string(model::LatentMode l) { return l == model::LatentMode::single ? "single" : "disentangled"; }

inline model::MemoryMode parse_memory(const std::string& s) {
  if (s == "prepended_slot") return model::MemoryMode::prepended_slot;
  if (s == "per_layer") return model::MemoryMode::per_layer;
  throw std::invalid_argument("unknown memory mode '" + s + "'");
}
inline model::ClsPath parse_cls_path(const std::string& s) {
  if (s == "mask_zw") return model::ClsPath::mask_zw;
  if (s == "zs_only") return model::ClsPath::zs_only;
  throw std::invalid_argument("unknown cls_path '" + s + "'");
}
inline model::LatentMode parse_latent(const std::string& s) {
  if (s == "disentangled") return model::LatentMode::disentangled;
  if (s == "single") return model::LatentMode::single;
  throw std::invalid_argument("unknown latent mode '" + s + "'");
}

inline nlohmann::json to_json(const model::ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"hidden", c.hidden},   {"heads", c.heads},
          {"layers_lower", c.layers_lower}, {"layers_upper", c.layers_upper}, {"ffn", c.ffn},
          {"d_zs", c.d_zs},             {"d_zw", c.d_zw},       {"max_len", c.max_len},
          {"dropout", c.dropout},       {"init_std", c.init_std}, {"memory", to_string(c.memory)},
          {"cls_path", to_string(c.cls_path)}, {"latent", to_string(c.latent)}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline model::ModelConfig model_config_from_json(const nlohmann::json& j, model::ModelConfig c = {}) {
  if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    if (k == "vocab_size") c.vocab_size = v.get<int>();
    else if (k == "hidden") c.hidden = v.get<int>();
    else if (k == "heads") c.heads = v.get<int>();
    else if (k == "layers_lower") c.layers_lower = v.get<int>();
    else if (k == "layers_upper") c.layers_upper = v.get<int>();
    else if (k == "ffn") c.ffn = v.get<int>();
    else if (k == "d_zs") c.d_zs = v.get<int>();
    else if (k == "d_zw") c.d_zw = v.get<int>();
    else if (k == "max_len") c.max_len = v.get<int>();
    else if (k == "dropout") c.dropout = v.get<double>();
    else if (k == "init_std") c.init_std = v.get<double>();
    else if (k == "memory") c.memory = parse_memory(v.get<std::string>());
    else if (k == "cls_path") c.cls_path = parse_cls_path(v.get<std::string>());
    else if (k == "latent") c.latent = parse_latent(v.get<std::string>());
    else throw std::invalid_argument("unknown model config key '" + k + "'");
  }
  c.validate();
  return c;
}

template <class T>
void save(const std::filesystem::path& path, const model::Model<T>& m, const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json header;
  header["config"] = to_json(m.config());
  header["meta"] = meta;
  header["dtype"] = "f32";
  auto& index = header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : m.parameters()) {
    index.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(p.value.size());
  }
  const std::string h = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t n = h.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& p : m.parameters()) {
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = p.value.template cast<float>();
      out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("short write to checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

struct Header {
  model::ModelConfig config;
  nlohmann::json meta;
  nlohmann::json tensors;
  std::uint64_t data_offset = 0;
};

inline Header read_header(std::ifstream& in, const std::string& where) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw std::runtime_error(where + ": not a checkpoint file");
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n > (1u << 28)) throw std::runtime_error(where + ": corrupt checkpoint header");
  std::string h(n, '\0');
  in.read(h.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error(where + ": truncated checkpoint header");
  auto j = nlohmann::json::parse(h);
  Header out;
  out.config = model_config_from_json(j.at("config"));
  out.meta = j.value("meta", nlohmann::json::object());
  out.tensors = j.at("tensors");
  out.data_offset = sizeof kMagic + sizeof n + n;
  return out;
}

inline Header peek(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_header(in, path.string());
}

template <class T>
model::Model<T> load(const std::filesystem::path& path, nlohmann::json* meta = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const Header h = read_header(in, path.string());
  auto m = model::Model<T>::uninitialized(h.config);
  auto& params = m.parameters();
  if (h.tensors.size() != params.size()) throw std::runtime_error(path.string() + ": tensor count mismatch");
  std::size_t i = 0;
  for (auto& p : params) {
    const auto& t = h.tensors[i++];
    if (t.at("name").get<std::string>() != p.name || t.at("rows").get<long>() != p.value.rows() ||
        t.at("cols").get<long>() != p.value.cols()) {
      throw std::runtime_error(path.string() + ": tensor '" + p.name + "' does not match the model layout");
    }
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(p.value.rows(), p.value.cols());
    in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!in) throw std::runtime_error(path.string() + ": truncated tensor data");
    p.value = f.template cast<T>();
  }
  if (meta) *meta = h.meta;
  return m;
}

}  // namespace vadet::checkpoint
