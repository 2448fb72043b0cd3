#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/SVD>

#include "sketchprune/error.hpp"
#include "sketchprune/fd_sketch.hpp"
#include "sketchprune/testkit.hpp"

namespace sketchprune::testkit {

FilterMatrix reference_fd(const FilterMatrix& w, int ell) {
  if (ell < 1) throw Error(ErrorCode::invalid_argument, "sketch width must be >= 1");
  if (!w.values.allFinite()) throw Error(ErrorCode::non_finite, "filter matrix has non-finite values");

  const Eigen::Index d = w.rows();
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(d, ell);
  std::vector<bool> occupied(static_cast<std::size_t>(ell), false);

  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    // Insert W_j into an empty slot.
    const auto slot = std::find(occupied.begin(), occupied.end(), false);
    const auto s = static_cast<Eigen::Index>(slot - occupied.begin());
    omega.col(s) = w.values.col(j);
    *slot = true;

    if (std::find(occupied.begin(), occupied.end(), false) != occupied.end()) continue;

    // [U, S, V] = SVD(Omega)
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(omega, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::MatrixXd u = svd.matrixU();
    Eigen::MatrixXd v = svd.matrixV();
    const Eigen::Index rank_cap = std::min<Eigen::Index>(d, ell);
    Eigen::MatrixXd u_lead = u.leftCols(rank_cap);
    Eigen::MatrixXd v_lead = v.leftCols(rank_cap);
    canonicalize_signs(u_lead, &v_lead);

    Eigen::VectorXd sigma = Eigen::VectorXd::Zero(ell);
    sigma.head(rank_cap) = svd.singularValues();

    // delta = s_k^2 with k = ceil(ell / 2)
    const int k = (ell + 1) / 2;
    const double delta = sigma(k - 1) * sigma(k - 1);

    // S_hat = sqrt(max(S^2 - I * delta, 0))
    Eigen::MatrixXd s_hat = Eigen::MatrixXd::Zero(rank_cap, ell);
    for (Eigen::Index i = 0; i < rank_cap; ++i) {
      s_hat(i, i) = std::sqrt(std::max(sigma(i) * sigma(i) - delta, 0.0));
    }

    // Omega = U * S_hat
    omega = u_lead * s_hat;

    for (int i = 0; i < ell; ++i) occupied[static_cast<std::size_t>(i)] = i < k - 1;
  }
  return FilterMatrix(std::move(omega));
}

}  // namespace sketchprune::testkit
