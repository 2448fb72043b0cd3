#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sketchprune/tensor.hpp"

namespace sketchprune {

// Extreme eigenvalues and Frobenius norm of A*A^T - B*B^T.
struct GramDifference {
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  double frobenius = 0.0;
};

// A and B must have the same row count d. When the stacked width
// cols(A) + cols(B) is below d the difference is reduced through a thin QR of
// [A | B] to a (cols(A)+cols(B))-square symmetric problem with identical
// nonzero spectrum; the remaining eigenvalues are exactly zero. Otherwise the
// d x d difference is formed and solved directly.
GramDifference gram_difference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct QualityReport {
  double sigma_w_err = 0.0;    // ||Sigma_W - Sigma_Omega||_F, mean-centered
  double gram_err_fro = 0.0;   // ||W W^T - Omega Omega^T||_F
  double gram_err_spec = 0.0;  // lambda_max(W W^T - Omega Omega^T)
  double min_eig_diff = 0.0;   // lambda_min(W W^T - Omega Omega^T)
  double min_eig_omega = 0.0;  // lambda_min(Omega Omega^T)
  double w_fro_sq = 0.0;       // ||W||_F^2
  double epsilon = 0.0;        // 2 / ell
  double epsilon_bound = 0.0;  // epsilon * ||W||_F^2
  bool bound_satisfied = false;
  bool psd_ordered = false;    // both minimum eigenvalues within tolerance
};

// Absolute slack applied to every eigenvalue check, relative to ||W||_F^2.
inline constexpr double kCertificateSlack = 1e-6;

// Throws shape_mismatch when the row counts differ, invalid_argument if ell < 1.
QualityReport sketch_quality(const FilterMatrix& w, const FilterMatrix& omega, int ell);

inline constexpr int kHistogramBins = 64;

struct LayerWeightStats {
  std::string layer;
  std::int64_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  double min = 0.0;
  double max = 0.0;
  std::vector<double> filter_means;  // mean of each output filter's entries
  double mean_filter_norm = 0.0;     // ||mean of the filter columns||_2
  std::array<std::int64_t, kHistogramBins> histogram{};
  // |mean| > 0.1 * std: the zero-mean simplification is strained.
  bool zero_mean_violated = false;
};

struct WeightStats {
  std::vector<LayerWeightStats> layers;  // conv layers, manifest order
};

LayerWeightStats tensor_stats(const std::string& layer, const WeightTensor& weight);
WeightStats weight_stats(const TensorArchive& archive);

// Columns: layer, bin_lo, bin_hi, count. One line per bin.
std::string histogram_text(const WeightStats& stats);

struct LayerComplexity {
  std::string layer;
  LayerKind kind = LayerKind::conv;
  std::int64_t macs = 0;
  std::int64_t params = 0;
  Spatial output;
};

struct ComplexityReport {
  std::vector<LayerComplexity> layers;
  std::int64_t total_macs = 0;
  std::int64_t total_params = 0;
  // Set by compare_models: base totals and 1 - after/before as a
  // percentage rounded to one decimal.
  std::optional<std::int64_t> base_macs;
  std::optional<std::int64_t> base_params;
  std::optional<double> pruning_rate_flops;
  std::optional<double> pruning_rate_params;
};

inline constexpr const char* kFlopsConvention =
    "FLOPs = multiply-accumulates of conv and fc layers (one MAC = one FLOP; "
    "bias, BN, pooling and additions excluded); params = conv/fc weights + "
    "biases + BN affine pairs";

// Spatial sizes are propagated from input_spatial through conv/pool
// stride and padding. Throws invalid_manifest when propagation fails.
ComplexityReport count_flops_params(const ModelManifest& manifest);

// `pruned` must have the same layer names, kinds and edges as `base`;
// otherwise topology_mismatch. Totals and per-layer rows describe `pruned`.
ComplexityReport compare_models(const ModelManifest& base, const ModelManifest& pruned);
ComplexityReport compare_models(const TensorArchive& base, const TensorArchive& pruned);

}  // namespace sketchprune
