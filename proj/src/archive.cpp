#include "sketchprune/archive.hpp"

#include <fstream>
#include <set>

#include "sketchprune/error.hpp"
#include "sketchprune/npy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace sketchprune {

namespace {

constexpr const char* kManifestFile = "manifest.json";

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) {
    throw Error(ErrorCode::invalid_manifest, where + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_manifest, where + ": field '" + key + "': " + e.what());
  }
}

template <typename T>
T optional_field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_manifest, std::string("field '") + key + "': " + e.what());
  }
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open '" + file.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::invalid_manifest, file.string() + ": " + e.what());
  }
}

}  // namespace

ordered_json manifest_to_json(const ModelManifest& m) {
  ordered_json j;
  j["schema"] = kManifestSchema;
  j["name"] = m.name;
  j["input_spatial"] = {m.input_spatial.height, m.input_spatial.width};
  j["input_channels"] = m.input_channels;
  j["num_classes"] = m.num_classes;
  j["layers"] = ordered_json::array();
  for (const auto& l : m.layers) {
    ordered_json lj;
    lj["name"] = l.name;
    lj["kind"] = to_string(l.kind);
    lj["in_channels"] = l.in_channels;
    lj["out_channels"] = l.out_channels;
    lj["kernel_h"] = l.kernel_h;
    lj["kernel_w"] = l.kernel_w;
    lj["stride"] = l.stride;
    lj["padding"] = l.padding;
    if (l.has_weights()) lj["bias"] = l.bias;
    if (l.kind == LayerKind::pool) lj["global"] = l.global_pool;
    lj["prunable"] = l.prunable;
    lj["prune_group"] = l.prune_group;
    j["layers"].push_back(std::move(lj));
  }
  j["edges"] = ordered_json::array();
  for (const auto& e : m.edges) j["edges"].push_back({e.producer, e.consumer});
  return j;
}

ModelManifest manifest_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_manifest, "manifest must be a JSON object");
  const auto schema = required<std::string>(j, "schema", "manifest");
  if (schema != kManifestSchema) {
    throw Error(ErrorCode::invalid_manifest, "unsupported manifest schema '" + schema + "'");
  }
  ModelManifest m;
  m.name = optional_field<std::string>(j, "name", "");
  const auto spatial = required<std::vector<int>>(j, "input_spatial", "manifest");
  if (spatial.size() != 2) throw Error(ErrorCode::invalid_manifest, "input_spatial must be [height, width]");
  m.input_spatial = {spatial[0], spatial[1]};
  m.input_channels = optional_field<int>(j, "input_channels", 3);
  m.num_classes = required<int>(j, "num_classes", "manifest");

  const auto& layers = j.contains("layers") ? j.at("layers") : json::array();
  if (!layers.is_array()) throw Error(ErrorCode::invalid_manifest, "'layers' must be an array");
  for (const auto& lj : layers) {
    LayerSpec l;
    l.name = required<std::string>(lj, "name", "layer");
    const auto where = "layer '" + l.name + "'";
    l.kind = parse_layer_kind(required<std::string>(lj, "kind", where));
    l.in_channels = required<int>(lj, "in_channels", where);
    l.out_channels = required<int>(lj, "out_channels", where);
    l.kernel_h = optional_field<int>(lj, "kernel_h", 1);
    l.kernel_w = optional_field<int>(lj, "kernel_w", 1);
    l.stride = optional_field<int>(lj, "stride", 1);
    l.padding = optional_field<int>(lj, "padding", 0);
    l.bias = optional_field<bool>(lj, "bias", false);
    l.global_pool = optional_field<bool>(lj, "global", false);
    l.prunable = optional_field<bool>(lj, "prunable", false);
    l.prune_group = optional_field<std::string>(lj, "prune_group", "");
    m.layers.push_back(std::move(l));
  }
  const auto& edges = j.contains("edges") ? j.at("edges") : json::array();
  if (!edges.is_array()) throw Error(ErrorCode::invalid_manifest, "'edges' must be an array");
  for (const auto& ej : edges) {
    if (!ej.is_array() || ej.size() != 2 || !ej[0].is_string() || !ej[1].is_string()) {
      throw Error(ErrorCode::invalid_manifest, "each edge must be [producer, consumer]");
    }
    m.edges.push_back({ej[0].get<std::string>(), ej[1].get<std::string>()});
  }
  return m;
}

ModelManifest load_manifest(const fs::path& file) {
  auto m = manifest_from_json(read_json(file));
  m.validate();
  return m;
}

TensorArchive load_archive(const fs::path& dir) {
  const auto manifest_path = dir / kManifestFile;
  if (!fs::exists(manifest_path)) {
    throw Error(ErrorCode::missing_file, "no manifest.json in '" + dir.string() + "'");
  }
  const auto j = read_json(manifest_path);
  TensorArchive archive;
  archive.manifest = manifest_from_json(j);

  const auto& entries = j.contains("tensors") ? j.at("tensors") : json::array();
  if (!entries.is_array()) throw Error(ErrorCode::invalid_manifest, "'tensors' must be an array");
  for (const auto& tj : entries) {
    WeightTensor t;
    t.name = required<std::string>(tj, "name", "tensor");
    const auto where = "tensor '" + t.name + "'";
    const auto file = required<std::string>(tj, "file", where);
    t.shape = required<std::vector<std::int64_t>>(tj, "shape", where);
    if (fs::path(file).has_parent_path()) {
      throw Error(ErrorCode::invalid_manifest, where + ": file must be a plain name");
    }
    const auto path = dir / file;
    if (!fs::exists(path)) throw Error(ErrorCode::missing_file, where + ": missing " + path.string());
    auto array = npy::read(path);
    if (array.shape != t.shape) {
      throw Error(ErrorCode::shape_mismatch, where + ": NPY shape differs from manifest shape");
    }
    t.data = std::move(array.data);
    const auto name = t.name;
    if (!archive.tensors.emplace(name, std::move(t)).second) {
      throw Error(ErrorCode::invalid_manifest, "duplicate tensor '" + name + "'");
    }
  }
  archive.validate();
  return archive;
}

void save_archive(const TensorArchive& archive, const fs::path& dir) {
  for (const auto& [name, t] : archive.tensors) {
    if (!all_finite(t.data)) {
      throw Error(ErrorCode::non_finite, "refusing to save tensor '" + name + "' with non-finite values");
    }
    if (t.numel() != static_cast<std::int64_t>(t.data.size())) {
      throw Error(ErrorCode::shape_mismatch, "tensor '" + name + "' data length differs from its shape");
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::io_error, "cannot create '" + dir.string() + "': " + ec.message());
  }

  auto j = manifest_to_json(archive.manifest);
  j["tensors"] = ordered_json::array();
  for (const auto& [name, t] : archive.tensors) {
    const auto file = name + ".npy";
    npy::write(dir / file, t.shape, t.data);
    ordered_json tj;
    tj["name"] = name;
    tj["file"] = file;
    tj["shape"] = t.shape;
    j["tensors"].push_back(std::move(tj));
  }
  const auto path = dir / kManifestFile;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write '" + path.string() + "'");
  out << j.dump(1) << '\n';
  if (!out) throw Error(ErrorCode::io_error, "write failed for '" + path.string() + "'");
}

}  // namespace sketchprune
