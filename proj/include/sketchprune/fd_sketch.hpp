#pragma once

#include <Eigen/Dense>

#include "sketchprune/tensor.hpp"

namespace sketchprune {

struct SketchResult {
  FilterMatrix omega;  // d x ell
  int shrink_count = 0;
  double elapsed_seconds = 0.0;
  double fro_norm_omega = 0.0;
};

// One rotate-and-shrink step on a full sketch buffer.
struct SvdShrinkState {
  Eigen::MatrixXd u;        // d x min(d, ell), orthonormal columns
  Eigen::VectorXd s;        // length ell, non-increasing; zero-padded when d < ell
  Eigen::MatrixXd v;        // ell x min(d, ell)
  int shrink_index = 1;     // k = ceil(ell / 2), 1-based
  double delta = 0.0;       // s[k-1]^2
  Eigen::VectorXd s_hat;    // sqrt(max(s^2 - delta, 0)), length ell
};

// round(rate * c), halves rounded up, clamped to [1, c]. Throws
// rate_out_of_range unless 0 < rate <= 1, invalid_argument if c < 1.
int sketch_size(double rate, int c);

// 1-based position of the singular value whose square is subtracted.
constexpr int shrink_index(int ell) { return (ell + 1) / 2; }

// Flips singular-vector pairs so each column of `u` has its largest-magnitude
// entry positive (first such entry on ties). `v` may be null.
void canonicalize_signs(Eigen::MatrixXd& u, Eigen::MatrixXd* v);

// Replaces `buffer` (d x ell, every slot occupied) with U * diag(s_hat).
// Columns shrink_index-1 .. ell-1 of the result are exactly zero.
SvdShrinkState svd_shrink(Eigen::MatrixXd& buffer);

// Frequent Directions over the columns of `w`, streamed left to right into an
// ell-column buffer. A slot counter (not a zero test) tracks occupancy; after
// a shrink the first shrink_index-1 slots stay occupied. Throws
// invalid_argument for ell < 1 and non_finite for non-finite input.
SketchResult fd_sketch(const FilterMatrix& w, int ell);

// omega / ||omega||_F. Throws degenerate_sketch for an all-zero sketch.
FilterMatrix frobenius_normalize(const SketchResult& result);

}  // namespace sketchprune
