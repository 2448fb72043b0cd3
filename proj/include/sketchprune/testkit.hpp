#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sketchprune/tensor.hpp"

namespace sketchprune::testkit {

// Frequent Directions written as a direct transcription of the streaming
// algorithm: slot flags instead of a counter, a full Jacobi SVD on every
// shrink, and the full product U * diag(s_hat). Shares only the sign
// convention with the production path.
FilterMatrix reference_fd(const FilterMatrix& w, int ell);

// d x c matrix of standard normals from CounterRng(seed), filled column by
// column and rounded to float32 so an archive stores it exactly.
FilterMatrix random_matrix(std::uint64_t seed, int d, int c);

// Lower-case hex SHA-256 over the float64 little-endian column-major bytes.
std::string checksum(const FilterMatrix& m);

struct GoldenCase {
  std::uint64_t seed = 0;
  int d = 0;
  int c = 0;
  int ell = 0;
  std::string input_checksum;
  std::string omega_checksum;  // of reference_fd's output
  double gram_err_spec = 0.0;  // lambda_max(W W^T - Omega Omega^T)
};

GoldenCase generate_case(std::uint64_t seed, int d, int c, int ell);

// One-layer archive holding W as a 1x1 conv with c filters over d inputs.
TensorArchive case_archive(const FilterMatrix& w);

struct SweepShape {
  std::uint64_t seed = 0;
  int d = 0;
  int c = 0;
  int ell = 0;
};

// `count` shapes with d in [8, 512], c in [4, 256], ell in [2, c], drawn from
// CounterRng(master_seed). Case i uses seed master_seed * 1000 + i.
std::vector<SweepShape> sweep_shapes(std::uint64_t master_seed, int count);

void save_golden(const std::vector<GoldenCase>& cases, const std::filesystem::path& file);
std::vector<GoldenCase> load_golden(const std::filesystem::path& file);

// Weights ~ N(0, 2 / fan_in), zero biases, identity BN statistics.
TensorArchive random_archive(const ModelManifest& manifest, std::uint64_t seed);

}  // namespace sketchprune::testkit
