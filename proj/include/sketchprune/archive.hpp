#pragma once

#include <filesystem>

#include "json.hpp"

#include "sketchprune/tensor.hpp"

namespace sketchprune {

// Manifest <-> JSON. The "tensors" array written by save_archive is handled
// separately; these cover the architecture fields only.
nlohmann::ordered_json manifest_to_json(const ModelManifest& m);
ModelManifest manifest_from_json(const nlohmann::json& j);

// Reads an architecture-only manifest (no tensors) and validates it.
ModelManifest load_manifest(const std::filesystem::path& file);

// `dir` holds manifest.json plus one NPY file per tensor listed in its
// "tensors" array. The result is fully validated.
TensorArchive load_archive(const std::filesystem::path& dir);

// Writes manifest.json and the NPY files into `dir`, creating it if needed.
// Output bytes depend only on the archive contents. Refuses archives with
// non-finite values.
void save_archive(const TensorArchive& archive, const std::filesystem::path& dir);

}  // namespace sketchprune
