#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sketchprune::npy {

struct Array {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

// NPY v1.0, descr '<f4', C order. The header dict is padded with spaces so
// the preamble (magic + version + length + dict) is a multiple of 64 bytes
// and ends with '\n'.
std::string encode(std::span<const std::int64_t> shape, std::span<const float> data);

// Accepts versions 1.0, 2.0 and 3.0 with descr '<f4' and fortran_order False.
// `source` names the buffer in error messages. Throws malformed_npy or
// shape_mismatch.
Array decode(std::string_view bytes, std::string_view source = "<buffer>");

Array read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, std::span<const std::int64_t> shape,
           std::span<const float> data);

}  // namespace sketchprune::npy
