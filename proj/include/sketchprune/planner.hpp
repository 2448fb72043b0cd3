#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sketchprune/analysis.hpp"
#include "sketchprune/tensor.hpp"

namespace sketchprune {

struct PrunePlan {
  double global_rate = 1.0;
  std::map<std::string, double> rates;       // every conv/fc layer
  std::map<std::string, int> sketch_sizes;   // every conv/fc layer
  std::map<std::string, double> group_rates;
};

struct PlanOptions {
  std::map<std::string, double> overrides;
  // Treat every conv layer as prunable, including the stem and layers the
  // manifest pins. Classifier outputs are never pruned.
  bool prune_all = false;
};

// Prunable layers get `global_rate` unless overridden; everything else gets
// 1.0. A prune group takes the minimum rate of its members, or 1.0 if any
// member conv/fc is not prunable. Throws unknown_layer, rate_out_of_range or
// invalid_argument (override on a layer that cannot be pruned).
PrunePlan build_plan(const ModelManifest& manifest, double global_rate,
                     const PlanOptions& options = {});

// Output width of every layer after applying `plan` (manifest order). Throws
// reconciliation_failure if an add or grouped layer would see mismatched
// widths.
std::vector<int> planned_widths(const ModelManifest& manifest, const PrunePlan& plan);

enum class SketchMethod { fd, svd_truncate };

struct SketchOptions {
  SketchMethod method = SketchMethod::fd;
  // Certificates and covariance errors per sketch step.
  bool compute_quality = true;
  // Worker threads for independent layers; 0 = hardware concurrency.
  unsigned threads = 1;
  // Seeds the column-subsampling fallback used when a sketch is all zeros.
  std::uint64_t fallback_seed = 0;
};

// One sketched axis of one layer.
struct SketchStep {
  std::string layer;
  std::string axis;  // "output" or "input"
  int columns = 0;   // c
  int sketch_width = 0;  // c~
  int shrink_count = 0;
  double elapsed_seconds = 0.0;
  bool fallback = false;  // all-zero sketch replaced by column subsampling
  std::optional<QualityReport> quality;
};

struct PruneReport {
  std::string method;
  std::vector<SketchStep> steps;  // manifest order, input axis before output axis
  std::vector<std::string> warnings;
  std::int64_t flops_before = 0;
  std::int64_t flops_after = 0;
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  double pruning_rate_flops = 0.0;
  double pruning_rate_params = 0.0;
  double elapsed_total = 0.0;

  bool all_certificates_pass() const;
};

struct PruneOutcome {
  TensorArchive archive;
  PruneReport report;
};

// Sketches every layer whose width changes: first the input-channel axis (if
// producers shrank), then the output-filter axis, then divides the result by
// its Frobenius norm. Unchanged layers are copied bit-exactly. BN layers
// after a rewritten conv are reset to identity statistics.
PruneOutcome sketch_model(const TensorArchive& archive, const PrunePlan& plan,
                          const SketchOptions& options = {});

// Keeps a seeded, order-preserving random subset of filters per layer (one
// subset per prune group) and slices consumers to match.
PruneOutcome random_subsample(const TensorArchive& archive, const PrunePlan& plan,
                              std::uint64_t seed);

// Sorted size-k subset of [0, n), partial Fisher-Yates on CounterRng(seed).
std::vector<int> random_subset(int n, int k, std::uint64_t seed, std::uint64_t stream);

// Keeps columns `keep` of `w`, in order.
FilterMatrix select_columns(const FilterMatrix& w, const std::vector<int>& keep);

// Top-k left singular vectors scaled by their singular values. Throws
// invalid_argument unless 1 <= k <= min(rows, cols).
FilterMatrix svd_truncate(const FilterMatrix& w, int k);

}  // namespace sketchprune
