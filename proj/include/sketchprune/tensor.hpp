#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace sketchprune {

enum class LayerKind { conv, fc, bn, pool, add, concat };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::conv;
  int out_channels = 1;
  int in_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;
  bool bias = false;
  // pool only: reduce the whole spatial extent to 1x1.
  bool global_pool = false;
  std::string prune_group;
  bool prunable = false;

  bool has_weights() const { return kind == LayerKind::conv || kind == LayerKind::fc; }
  // Filter length d = c_in * h * w.
  std::int64_t filter_rows() const {
    return std::int64_t{in_channels} * kernel_h * kernel_w;
  }
};

struct Edge {
  std::string producer;
  std::string consumer;
  bool operator==(const Edge&) const = default;
};

struct Spatial {
  int height = 0;
  int width = 0;
  bool operator==(const Spatial&) const = default;
};

inline constexpr std::string_view kManifestSchema = "sketchprune-manifest-v1";

struct ModelManifest {
  std::string name;
  int input_channels = 3;
  Spatial input_spatial;
  int num_classes = 1;
  std::vector<LayerSpec> layers;
  std::vector<Edge> edges;

  std::optional<std::size_t> find(std::string_view layer) const;
  // Throws unknown_layer.
  std::size_t index_of(std::string_view layer) const;
  const LayerSpec& layer(std::string_view name) const { return layers[index_of(name)]; }

  // Producer indices of layer i, in edge-list order.
  std::vector<std::size_t> producers(std::size_t i) const;
  std::vector<std::size_t> consumers(std::size_t i) const;

  // Kahn's algorithm, ties broken by manifest order. Throws invalid_manifest
  // on cycles.
  std::vector<std::size_t> topological_order() const;

  // Checks layer, group, edge and channel invariants; throws
  // invalid_manifest or shape_mismatch.
  void validate() const;
};

struct WeightTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  std::int64_t numel() const;
  bool operator==(const WeightTensor&) const = default;
};

// Tensor keys are "<layer>.<role>"; roles follow the common framework names.
std::string tensor_key(std::string_view layer, std::string_view role);

struct ExpectedTensor {
  std::string role;
  std::vector<std::int64_t> shape;
};

// Tensors a layer must carry in an archive: conv -> weight [+bias],
// fc -> weight [+bias], bn -> weight, bias, running_mean, running_var.
std::vector<ExpectedTensor> expected_tensors(const LayerSpec& layer);

struct TensorArchive {
  ModelManifest manifest;
  std::map<std::string, WeightTensor> tensors;

  const WeightTensor& tensor(std::string_view layer, std::string_view role) const;
  // Manifest invariants, tensor presence and shapes, finiteness.
  void validate() const;
};

// Column j is filter j of a conv layer, flattened in (input-channel,
// kernel-row, kernel-col) order. Numerics run in double precision.
struct FilterMatrix {
  Eigen::MatrixXd values;

  FilterMatrix() = default;
  explicit FilterMatrix(Eigen::MatrixXd m) : values(std::move(m)) {}
  FilterMatrix(Eigen::Index rows, Eigen::Index cols) : values(Eigen::MatrixXd::Zero(rows, cols)) {}

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

// [c, c_in, h, w] -> (c_in*h*w) x c. Throws shape_mismatch for non-4-D input.
FilterMatrix flatten_filters(const WeightTensor& t);
WeightTensor unflatten_filters(const FilterMatrix& m, int in_channels, int kernel_h,
                               int kernel_w, std::string name = {});

// [c, c_in, h, w] -> (c*h*w) x c_in; column k stacks input channel k's kernel
// slice from every filter, in (filter, kernel-row, kernel-col) order.
FilterMatrix flatten_input_channels(const WeightTensor& t);
WeightTensor unflatten_input_channels(const FilterMatrix& m, int out_channels, int kernel_h,
                                      int kernel_w, std::string name = {});

bool all_finite(std::span<const float> values);

}  // namespace sketchprune
