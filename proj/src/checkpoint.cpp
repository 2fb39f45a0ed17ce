// SPDX-License-Identifier: Apache-2.0
#include "xmodal/checkpoint.hpp"

#include <fstream>
#include <unordered_map>

#include "xmodal/config_json.hpp"
#include "xmodal/serialize.hpp"

namespace xmodal {

namespace {
constexpr const char* kCheckpointFormat = "xmodal-checkpoint-v1";
}

void save_checkpoint(const std::filesystem::path& json_path,
                     const std::filesystem::path& bin_path, const BimodalClassifier& model) {
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw ValueError("save_checkpoint: cannot open " + bin_path.string());

  nlohmann::json meta;
  meta["format"] = kCheckpointFormat;
  meta["config"] = model.config();
  auto& tensors = meta["tensors"] = nlohmann::json::array();

  std::uint64_t offset = 0;
  for (const auto& nt : model.named_parameters()) {
    const std::uint64_t length = serialized_size(nt.tensor);
    write_tensor(bin, nt.tensor);
    tensors.push_back({{"name", nt.name}, {"offset", offset}, {"length", length}});
    offset += length;
  }

  std::ofstream meta_out(json_path, std::ios::binary | std::ios::trunc);
  if (!meta_out) throw ValueError("save_checkpoint: cannot open " + json_path.string());
  meta_out << meta.dump(2) << "\n";
  if (!bin || !meta_out) throw ValueError("save_checkpoint: write failed");
}

BimodalClassifier load_checkpoint(const std::filesystem::path& json_path,
                                  const std::filesystem::path& bin_path) {
  std::ifstream meta_in(json_path, std::ios::binary);
  if (!meta_in) throw ValueError("load_checkpoint: missing " + json_path.string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ValueError("load_checkpoint: malformed metadata: " + std::string(e.what()));
  }
  if (meta.value("format", "") != kCheckpointFormat)
    throw ValueError("load_checkpoint: unsupported format in " + json_path.string());

  ModelConfig cfg;
  try {
    from_json(meta.at("config"), cfg);
  } catch (const nlohmann::json::exception& e) {
    throw ValueError("load_checkpoint: malformed config: " + std::string(e.what()));
  }

  // Parameter values are overwritten below; the init seed is irrelevant.
  Rng scratch(0);
  BimodalClassifier model(cfg, scratch);

  std::unordered_map<std::string, Tensor> by_name;
  for (auto& nt : model.named_parameters()) by_name.emplace(nt.name, nt.tensor);

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw ValueError("load_checkpoint: missing " + bin_path.string());

  std::size_t loaded = 0;
  for (const auto& entry : meta.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw ValueError("load_checkpoint: tensor '" + name + "' does not exist in this architecture");
    bin.clear();
    bin.seekg(static_cast<std::streamoff>(offset));
    Tensor stored;
    try {
      stored = read_tensor(bin);
    } catch (const ValueError& e) {
      throw ValueError("load_checkpoint: tensor '" + name + "' at offset " + std::to_string(offset) +
                       ": " + e.what());
    }
    it->second.copy_data_from(stored);  // validates dtype and shape
    ++loaded;
  }
  if (loaded != by_name.size())
    throw ValueError("load_checkpoint: checkpoint holds " + std::to_string(loaded) +
                     " tensors but the architecture has " + std::to_string(by_name.size()));
  return model;
}

void save_checkpoint(const std::filesystem::path& dir, const BimodalClassifier& model) {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "checkpoint.json", dir / "checkpoint.bin", model);
}

BimodalClassifier load_checkpoint(const std::filesystem::path& dir) {
  return load_checkpoint(dir / "checkpoint.json", dir / "checkpoint.bin");
}

}  // namespace xmodal
