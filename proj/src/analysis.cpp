#include "sketchprune/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "sketchprune/error.hpp"

namespace sketchprune {

namespace {

Eigen::MatrixXd center_columns(const Eigen::MatrixXd& m) {
  if (m.cols() == 0) return m;
  const Eigen::VectorXd mean = m.rowwise().mean();
  return m.colwise() - mean;
}

GramDifference spectrum_of(const Eigen::MatrixXd& sym, bool has_implicit_zeros) {
  GramDifference g;
  g.frobenius = sym.norm();
  if (sym.size() == 0) return g;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorCode::numerical_failure, "symmetric eigensolver did not converge");
  }
  g.lambda_min = eig.eigenvalues().minCoeff();
  g.lambda_max = eig.eigenvalues().maxCoeff();
  if (has_implicit_zeros) {
    g.lambda_min = std::min(g.lambda_min, 0.0);
    g.lambda_max = std::max(g.lambda_max, 0.0);
  }
  return g;
}

}  // namespace

GramDifference gram_difference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) {
    throw Error(ErrorCode::shape_mismatch, "Gram difference operands differ in row count");
  }
  const Eigen::Index d = a.rows();
  const Eigen::Index na = a.cols();
  const Eigen::Index nb = b.cols();
  const Eigen::Index m = na + nb;
  if (d == 0 || m == 0) return {};

  if (m >= d) {
    Eigen::MatrixXd g(d, d);
    g.noalias() = a * a.transpose();
    g.noalias() -= b * b.transpose();
    return spectrum_of(g, false);
  }

  // [A | B] = Q R  =>  A A^T - B B^T = Q (Ra Ra^T - Rb Rb^T) Q^T.
  Eigen::MatrixXd stacked(d, m);
  stacked << a, b;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(stacked);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  Eigen::MatrixXd k(m, m);
  k.noalias() = r.leftCols(na) * r.leftCols(na).transpose();
  k.noalias() -= r.rightCols(nb) * r.rightCols(nb).transpose();
  return spectrum_of(k, true);
}

QualityReport sketch_quality(const FilterMatrix& w, const FilterMatrix& omega, int ell) {
  if (w.rows() != omega.rows()) {
    throw Error(ErrorCode::shape_mismatch, "W has " + std::to_string(w.rows()) + " rows, sketch has " +
                                               std::to_string(omega.rows()));
  }
  if (ell < 1) throw Error(ErrorCode::invalid_argument, "sketch width must be >= 1");

  QualityReport q;
  const auto diff = gram_difference(w.values, omega.values);
  q.gram_err_fro = diff.frobenius;
  q.gram_err_spec = diff.lambda_max;
  q.min_eig_diff = diff.lambda_min;
  q.min_eig_omega = gram_difference(omega.values, Eigen::MatrixXd(omega.rows(), 0)).lambda_min;
  q.sigma_w_err = gram_difference(center_columns(w.values), center_columns(omega.values)).frobenius;

  q.w_fro_sq = w.values.squaredNorm();
  q.epsilon = 2.0 / ell;
  q.epsilon_bound = q.epsilon * q.w_fro_sq;
  const double slack = kCertificateSlack * q.w_fro_sq;
  q.bound_satisfied = q.gram_err_spec <= q.epsilon_bound + slack;
  q.psd_ordered = q.min_eig_diff >= -slack && q.min_eig_omega >= -slack;
  return q;
}

LayerWeightStats tensor_stats(const std::string& layer, const WeightTensor& weight) {
  LayerWeightStats s;
  s.layer = layer;
  s.count = static_cast<std::int64_t>(weight.data.size());
  if (weight.data.empty()) return s;

  const auto [lo, hi] = std::minmax_element(weight.data.begin(), weight.data.end());
  s.min = *lo;
  s.max = *hi;
  double sum = 0.0;
  for (float v : weight.data) sum += v;
  s.mean = sum / static_cast<double>(s.count);
  double sq = 0.0;
  for (float v : weight.data) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(s.count));

  const double span = s.max - s.min;
  for (float v : weight.data) {
    int bin = 0;
    if (span > 0.0) {
      bin = static_cast<int>((v - s.min) / span * kHistogramBins);
      bin = std::clamp(bin, 0, kHistogramBins - 1);
    }
    ++s.histogram[static_cast<std::size_t>(bin)];
  }

  if (weight.shape.size() >= 2 && weight.shape[0] > 0) {
    const auto filters = weight.shape[0];
    const auto per = s.count / filters;
    Eigen::VectorXd mean_filter = Eigen::VectorXd::Zero(per);
    s.filter_means.resize(static_cast<std::size_t>(filters));
    for (std::int64_t f = 0; f < filters; ++f) {
      double fs = 0.0;
      for (std::int64_t i = 0; i < per; ++i) {
        const double v = weight.data[static_cast<std::size_t>(f * per + i)];
        fs += v;
        mean_filter(i) += v;
      }
      s.filter_means[static_cast<std::size_t>(f)] = fs / static_cast<double>(per);
    }
    s.mean_filter_norm = (mean_filter / static_cast<double>(filters)).norm();
  }
  s.zero_mean_violated = std::abs(s.mean) > 0.1 * s.std;
  return s;
}

WeightStats weight_stats(const TensorArchive& archive) {
  WeightStats stats;
  for (const auto& layer : archive.manifest.layers) {
    if (layer.kind != LayerKind::conv) continue;
    stats.layers.push_back(tensor_stats(layer.name, archive.tensor(layer.name, "weight")));
  }
  return stats;
}

std::string histogram_text(const WeightStats& stats) {
  std::ostringstream out;
  out.precision(9);
  out << "# layer bin_lo bin_hi count\n";
  for (const auto& l : stats.layers) {
    const double width = (l.max - l.min) / kHistogramBins;
    for (int b = 0; b < kHistogramBins; ++b) {
      out << l.layer << ' ' << l.min + b * width << ' ' << l.min + (b + 1) * width << ' '
          << l.histogram[static_cast<std::size_t>(b)] << '\n';
    }
  }
  return out.str();
}

ComplexityReport count_flops_params(const ModelManifest& manifest) {
  if (manifest.input_spatial.height < 1 || manifest.input_spatial.width < 1) {
    throw Error(ErrorCode::invalid_manifest, "input_spatial must be positive");
  }
  const auto order = manifest.topological_order();
  std::vector<Spatial> out(manifest.layers.size());
  std::vector<LayerComplexity> rows(manifest.layers.size());

  for (auto i : order) {
    const auto& l = manifest.layers[i];
    const auto prods = manifest.producers(i);
    Spatial in = manifest.input_spatial;
    if (!prods.empty()) {
      in = out[prods.front()];
      for (auto p : prods) {
        if (out[p] != in) {
          throw Error(ErrorCode::invalid_manifest,
                      "layer '" + l.name + "' merges inputs with different spatial sizes");
        }
      }
    }
    Spatial o = in;
    if (l.kind == LayerKind::conv || (l.kind == LayerKind::pool && !l.global_pool)) {
      o.height = (in.height + 2 * l.padding - l.kernel_h) / l.stride + 1;
      o.width = (in.width + 2 * l.padding - l.kernel_w) / l.stride + 1;
      if (in.height + 2 * l.padding < l.kernel_h || in.width + 2 * l.padding < l.kernel_w) {
        throw Error(ErrorCode::invalid_manifest, "layer '" + l.name + "' kernel exceeds its input");
      }
    } else if (l.kind == LayerKind::pool) {
      o = {1, 1};
    } else if (l.kind == LayerKind::fc) {
      if (in != Spatial{1, 1}) {
        throw Error(ErrorCode::invalid_manifest,
                    "fc layer '" + l.name + "' needs a 1x1 input; add a global pool");
      }
    }
    out[i] = o;

    auto& row = rows[i];
    row.layer = l.name;
    row.kind = l.kind;
    row.output = o;
    const std::int64_t cout = l.out_channels;
    switch (l.kind) {
      case LayerKind::conv: {
        const std::int64_t weights = cout * l.filter_rows();
        row.macs = weights * o.height * o.width;
        row.params = weights + (l.bias ? cout : 0);
        break;
      }
      case LayerKind::fc:
        row.macs = cout * l.in_channels;
        row.params = row.macs + (l.bias ? cout : 0);
        break;
      case LayerKind::bn:
        row.params = 2 * cout;
        break;
      default:
        break;
    }
  }

  ComplexityReport report;
  report.layers = std::move(rows);
  for (const auto& r : report.layers) {
    report.total_macs += r.macs;
    report.total_params += r.params;
  }
  return report;
}

ComplexityReport compare_models(const ModelManifest& base, const ModelManifest& pruned) {
  bool same = base.layers.size() == pruned.layers.size() && base.edges == pruned.edges;
  for (std::size_t i = 0; same && i < base.layers.size(); ++i) {
    same = base.layers[i].name == pruned.layers[i].name && base.layers[i].kind == pruned.layers[i].kind;
  }
  if (!same) throw Error(ErrorCode::topology_mismatch, "models do not share a topology");

  const auto before = count_flops_params(base);
  auto after = count_flops_params(pruned);
  const auto rate = [](std::int64_t b, std::int64_t a) {
    if (b == 0) return 0.0;
    const double pct = 100.0 * (1.0 - static_cast<double>(a) / static_cast<double>(b));
    return std::round(pct * 10.0) / 10.0;
  };
  after.base_macs = before.total_macs;
  after.base_params = before.total_params;
  after.pruning_rate_flops = rate(before.total_macs, after.total_macs);
  after.pruning_rate_params = rate(before.total_params, after.total_params);
  return after;
}

ComplexityReport compare_models(const TensorArchive& base, const TensorArchive& pruned) {
  return compare_models(base.manifest, pruned.manifest);
}

}  // namespace sketchprune
