#include "sketchprune/report_json.hpp"

using nlohmann::ordered_json;

namespace sketchprune {

ordered_json to_json(const QualityReport& q) {
  ordered_json j;
  j["sigma_w_err"] = q.sigma_w_err;
  j["gram_err_fro"] = q.gram_err_fro;
  j["gram_err_spec"] = q.gram_err_spec;
  j["min_eig_diff"] = q.min_eig_diff;
  j["min_eig_omega"] = q.min_eig_omega;
  j["w_fro_sq"] = q.w_fro_sq;
  j["epsilon"] = q.epsilon;
  j["epsilon_bound"] = q.epsilon_bound;
  // Stated with the Frobenius norm; recorded, not certified.
  j["frobenius_form_holds"] = q.gram_err_fro <= q.epsilon_bound;
  j["bound_satisfied"] = q.bound_satisfied;
  j["psd_ordered"] = q.psd_ordered;
  return j;
}

ordered_json to_json(const PrunePlan& plan) {
  ordered_json j;
  j["global_rate"] = plan.global_rate;
  j["rates"] = plan.rates;
  j["sketch_sizes"] = plan.sketch_sizes;
  j["group_rates"] = plan.group_rates;
  return j;
}

ordered_json to_json(const PruneReport& report) {
  ordered_json j;
  j["method"] = report.method;
  j["convention"] = kFlopsConvention;
  ordered_json layers = ordered_json::array();
  ordered_json timing_layers = ordered_json::array();
  for (const auto& s : report.steps) {
    ordered_json lj;
    lj["layer"] = s.layer;
    lj["axis"] = s.axis;
    lj["c"] = s.columns;
    lj["c_sketch"] = s.sketch_width;
    lj["shrink_count"] = s.shrink_count;
    lj["fallback"] = s.fallback;
    if (s.quality) {
      lj["covariance_error_frobenius"] = s.quality->gram_err_fro;
      lj["bound_epsilon"] = s.quality->epsilon;
      lj["bound_satisfied"] = s.quality->bound_satisfied;
      lj["quality"] = to_json(*s.quality);
    }
    layers.push_back(std::move(lj));
    timing_layers.push_back({{"layer", s.layer}, {"axis", s.axis}, {"elapsed_seconds", s.elapsed_seconds}});
  }
  j["layers"] = std::move(layers);
  j["warnings"] = report.warnings;
  j["all_certificates_pass"] = report.all_certificates_pass();
  j["totals"] = {
      {"flops_before", report.flops_before},
      {"flops_after", report.flops_after},
      {"params_before", report.params_before},
      {"params_after", report.params_after},
      {"pruning_rate_flops_pct", report.pruning_rate_flops},
      {"pruning_rate_params_pct", report.pruning_rate_params},
  };
  j["timing"] = {{"elapsed_total", report.elapsed_total}, {"layers", std::move(timing_layers)}};
  return j;
}

ordered_json to_json(const WeightStats& stats) {
  ordered_json layers = ordered_json::array();
  for (const auto& l : stats.layers) {
    ordered_json lj;
    lj["layer"] = l.layer;
    lj["count"] = l.count;
    lj["mean"] = l.mean;
    lj["std"] = l.std;
    lj["min"] = l.min;
    lj["max"] = l.max;
    lj["mean_filter_norm"] = l.mean_filter_norm;
    lj["zero_mean_violated"] = l.zero_mean_violated;
    lj["filter_means"] = l.filter_means;
    lj["histogram"] = l.histogram;
    layers.push_back(std::move(lj));
  }
  ordered_json j;
  j["histogram_bins"] = kHistogramBins;
  j["layers"] = std::move(layers);
  return j;
}

ordered_json to_json(const ComplexityReport& report) {
  ordered_json j;
  j["convention"] = kFlopsConvention;
  ordered_json layers = ordered_json::array();
  for (const auto& l : report.layers) {
    if (l.macs == 0 && l.params == 0) continue;
    layers.push_back({{"layer", l.layer},
                      {"kind", to_string(l.kind)},
                      {"output", {l.output.height, l.output.width}},
                      {"macs", l.macs},
                      {"params", l.params}});
  }
  j["layers"] = std::move(layers);
  j["total_macs"] = report.total_macs;
  j["total_params"] = report.total_params;
  if (report.base_macs) {
    j["base_macs"] = *report.base_macs;
    j["base_params"] = *report.base_params;
    j["pruning_rate_flops_pct"] = *report.pruning_rate_flops;
    j["pruning_rate_params_pct"] = *report.pruning_rate_params;
  }
  return j;
}

ordered_json deterministic_payload(const ordered_json& report) {
  ordered_json copy = report;
  copy.erase("timing");
  return copy;
}

}  // namespace sketchprune
