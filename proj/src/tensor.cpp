#include "sketchprune/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "sketchprune/error.hpp"

namespace sketchprune {

namespace {

struct Dims4 {
  std::int64_t out, in, h, w;
};

Dims4 conv_dims(const WeightTensor& t) {
  if (t.shape.size() == 4) return {t.shape[0], t.shape[1], t.shape[2], t.shape[3]};
  throw Error(ErrorCode::shape_mismatch, "tensor '" + t.name + "' is " +
                                            std::to_string(t.shape.size()) +
                                            "-D; expected a 4-D conv weight");
}

void check_numel(const WeightTensor& t) {
  if (t.numel() != static_cast<std::int64_t>(t.data.size())) {
    throw Error(ErrorCode::shape_mismatch,
                "tensor '" + t.name + "' holds " + std::to_string(t.data.size()) +
                    " values but its shape needs " + std::to_string(t.numel()));
  }
}

}  // namespace

std::int64_t WeightTensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string tensor_key(std::string_view layer, std::string_view role) {
  std::string key(layer);
  key += '.';
  key += role;
  return key;
}

std::vector<ExpectedTensor> expected_tensors(const LayerSpec& layer) {
  const std::int64_t out = layer.out_channels;
  switch (layer.kind) {
    case LayerKind::conv: {
      std::vector<ExpectedTensor> v{
          {"weight", {out, layer.in_channels, layer.kernel_h, layer.kernel_w}}};
      if (layer.bias) v.push_back({"bias", {out}});
      return v;
    }
    case LayerKind::fc: {
      std::vector<ExpectedTensor> v{{"weight", {out, layer.in_channels}}};
      if (layer.bias) v.push_back({"bias", {out}});
      return v;
    }
    case LayerKind::bn:
      return {{"weight", {out}}, {"bias", {out}}, {"running_mean", {out}}, {"running_var", {out}}};
    default:
      return {};
  }
}

const WeightTensor& TensorArchive::tensor(std::string_view layer, std::string_view role) const {
  const auto key = tensor_key(layer, role);
  const auto it = tensors.find(key);
  if (it == tensors.end()) throw Error(ErrorCode::missing_file, "archive has no tensor '" + key + "'");
  return it->second;
}

void TensorArchive::validate() const {
  manifest.validate();
  std::size_t expected_count = 0;
  for (const auto& layer : manifest.layers) {
    for (const auto& want : expected_tensors(layer)) {
      ++expected_count;
      const auto& t = tensor(layer.name, want.role);
      if (t.shape != want.shape) {
        throw Error(ErrorCode::shape_mismatch,
                    "tensor '" + t.name + "' shape does not match layer '" + layer.name + "'");
      }
      check_numel(t);
      if (!all_finite(t.data)) {
        throw Error(ErrorCode::non_finite, "tensor '" + t.name + "' contains non-finite values");
      }
    }
  }
  if (expected_count != tensors.size()) {
    throw Error(ErrorCode::invalid_manifest, "archive carries tensors not declared by any layer");
  }
}

bool all_finite(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

FilterMatrix flatten_filters(const WeightTensor& t) {
  const auto d = conv_dims(t);
  check_numel(t);
  const std::int64_t rows = d.in * d.h * d.w;
  FilterMatrix m(rows, d.out);
  // Row-major [out][in][h][w]: filter j occupies a contiguous run of `rows`.
  for (std::int64_t j = 0; j < d.out; ++j) {
    const float* src = t.data.data() + j * rows;
    for (std::int64_t r = 0; r < rows; ++r) m.values(r, j) = src[r];
  }
  return m;
}

WeightTensor unflatten_filters(const FilterMatrix& m, int in_channels, int kernel_h, int kernel_w,
                               std::string name) {
  const std::int64_t rows = std::int64_t{in_channels} * kernel_h * kernel_w;
  if (rows != m.rows()) {
    throw Error(ErrorCode::shape_mismatch,
                "filter matrix has " + std::to_string(m.rows()) + " rows, expected " +
                    std::to_string(rows));
  }
  WeightTensor t;
  t.name = std::move(name);
  t.shape = {m.cols(), in_channels, kernel_h, kernel_w};
  t.data.resize(static_cast<std::size_t>(rows * m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      t.data[static_cast<std::size_t>(j * rows + r)] = static_cast<float>(m.values(r, j));
    }
  }
  return t;
}

FilterMatrix flatten_input_channels(const WeightTensor& t) {
  const auto d = conv_dims(t);
  check_numel(t);
  const std::int64_t k = d.h * d.w;
  FilterMatrix m(d.out * k, d.in);
  for (std::int64_t o = 0; o < d.out; ++o) {
    for (std::int64_t c = 0; c < d.in; ++c) {
      const float* src = t.data.data() + (o * d.in + c) * k;
      for (std::int64_t s = 0; s < k; ++s) m.values(o * k + s, c) = src[s];
    }
  }
  return m;
}

WeightTensor unflatten_input_channels(const FilterMatrix& m, int out_channels, int kernel_h,
                                      int kernel_w, std::string name) {
  const std::int64_t k = std::int64_t{kernel_h} * kernel_w;
  if (m.rows() != out_channels * k) {
    throw Error(ErrorCode::shape_mismatch,
                "input-channel matrix has " + std::to_string(m.rows()) + " rows, expected " +
                    std::to_string(out_channels * k));
  }
  const std::int64_t in = m.cols();
  WeightTensor t;
  t.name = std::move(name);
  t.shape = {out_channels, in, kernel_h, kernel_w};
  t.data.resize(static_cast<std::size_t>(out_channels * in * k));
  for (std::int64_t o = 0; o < out_channels; ++o) {
    for (std::int64_t c = 0; c < in; ++c) {
      float* dst = t.data.data() + (o * in + c) * k;
      for (std::int64_t s = 0; s < k; ++s) dst[s] = static_cast<float>(m.values(o * k + s, c));
    }
  }
  return t;
}

}  // namespace sketchprune
