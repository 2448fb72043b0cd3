#include "sketchprune/fd_sketch.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <Eigen/SVD>

#include "sketchprune/error.hpp"

namespace sketchprune {

int sketch_size(double rate, int c) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw Error(ErrorCode::rate_out_of_range, "rate " + std::to_string(rate) + " is outside (0, 1]");
  }
  if (c < 1) throw Error(ErrorCode::invalid_argument, "channel count must be positive");
  const auto rounded = static_cast<int>(std::floor(rate * c + 0.5));
  return std::clamp(rounded, 1, c);
}

void canonicalize_signs(Eigen::MatrixXd& u, Eigen::MatrixXd* v) {
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      const double a = std::abs(u(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (u(arg, j) < 0.0) {
      u.col(j) = -u.col(j);
      if (v != nullptr) v->col(j) = -v->col(j);
    }
  }
}

SvdShrinkState svd_shrink(Eigen::MatrixXd& buffer) {
  const Eigen::Index ell = buffer.cols();
  if (ell < 1) throw Error(ErrorCode::invalid_argument, "empty sketch buffer");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(buffer, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw Error(ErrorCode::numerical_failure, "SVD did not converge");

  SvdShrinkState st;
  st.u = svd.matrixU();
  st.v = svd.matrixV();
  canonicalize_signs(st.u, &st.v);
  const Eigen::Index rank_cap = st.u.cols();
  st.s = Eigen::VectorXd::Zero(ell);
  st.s.head(rank_cap) = svd.singularValues();

  st.shrink_index = shrink_index(static_cast<int>(ell));
  const double pivot = st.s(st.shrink_index - 1);
  st.delta = pivot * pivot;
  st.s_hat.resize(ell);
  for (Eigen::Index j = 0; j < ell; ++j) {
    st.s_hat(j) = std::sqrt(std::max(st.s(j) * st.s(j) - st.delta, 0.0));
  }

  // Entries from shrink_index-1 on are exactly zero (s is sorted), so only
  // the leading columns need the product.
  const Eigen::Index live = std::min<Eigen::Index>(st.shrink_index - 1, rank_cap);
  buffer.setZero();
  buffer.leftCols(live).noalias() = st.u.leftCols(live) * st.s_hat.head(live).asDiagonal();
  return st;
}

SketchResult fd_sketch(const FilterMatrix& w, int ell) {
  if (ell < 1) throw Error(ErrorCode::invalid_argument, "sketch width must be >= 1");
  if (!w.values.allFinite()) throw Error(ErrorCode::non_finite, "filter matrix has non-finite values");

  const auto start = std::chrono::steady_clock::now();
  SketchResult result;
  Eigen::MatrixXd buffer = Eigen::MatrixXd::Zero(w.rows(), ell);
  Eigen::Index filled = 0;
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    buffer.col(filled++) = w.values.col(j);
    if (filled == ell) {
      const auto st = svd_shrink(buffer);
      filled = st.shrink_index - 1;
      ++result.shrink_count;
    }
  }
  result.fro_norm_omega = buffer.norm();
  result.omega = FilterMatrix(std::move(buffer));
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

FilterMatrix frobenius_normalize(const SketchResult& result) {
  const double norm = result.omega.values.norm();
  if (norm == 0.0) throw Error(ErrorCode::degenerate_sketch, "sketch is all zeros; cannot normalize");
  return FilterMatrix(result.omega.values / norm);
}

}  // namespace sketchprune
