#include "sketchprune/planner.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <exception>
#include <numeric>
#include <optional>
#include <set>
#include <thread>

#include <Eigen/SVD>

#include "sketchprune/error.hpp"
#include "sketchprune/fd_sketch.hpp"
#include "sketchprune/rng.hpp"

namespace sketchprune {

namespace {

bool effectively_prunable(const LayerSpec& l, const PlanOptions& options) {
  return l.prunable || (options.prune_all && l.kind == LayerKind::conv);
}

void check_rate(double rate, const std::string& what) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw Error(ErrorCode::rate_out_of_range, what + " rate " + std::to_string(rate) + " is outside (0, 1]");
  }
}

// Width of layer i's input after pruning, from its producers' widths.
int input_width(const ModelManifest& m, std::size_t i, const std::vector<int>& widths) {
  const auto prods = m.producers(i);
  if (prods.empty()) return m.input_channels;
  if (m.layers[i].kind == LayerKind::concat) {
    int sum = 0;
    for (auto p : prods) sum += widths[p];
    return sum;
  }
  const int w = widths[prods.front()];
  for (auto p : prods) {
    if (widths[p] != w) {
      throw Error(ErrorCode::reconciliation_failure,
                  "inputs of '" + m.layers[i].name + "' disagree on width after pruning (" +
                      m.layers[prods.front()].name + "=" + std::to_string(w) + ", " + m.layers[p].name +
                      "=" + std::to_string(widths[p]) + ")");
    }
  }
  return w;
}

ModelManifest pruned_manifest(const ModelManifest& base, const std::vector<int>& widths) {
  ModelManifest m = base;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    m.layers[i].out_channels = widths[i];
    m.layers[i].in_channels = input_width(base, i, widths);
  }
  return m;
}

WeightTensor as_4d(const WeightTensor& t) {
  WeightTensor v = t;
  if (v.shape.size() == 2) v.shape = {t.shape[0], t.shape[1], 1, 1};
  return v;
}

WeightTensor restore_rank(WeightTensor t, const LayerSpec& l) {
  if (l.kind == LayerKind::fc) t.shape = {t.shape[0], t.shape[1]};
  return t;
}

WeightTensor filled(std::string name, std::int64_t n, float value) {
  WeightTensor t;
  t.name = std::move(name);
  t.shape = {n};
  t.data.assign(static_cast<std::size_t>(n), value);
  return t;
}

void reset_batchnorm(TensorArchive& out, const LayerSpec& l) {
  const std::int64_t n = l.out_channels;
  using Init = std::pair<const char*, float>;
  for (const auto& [role, value] : std::array<Init, 4>{Init{"weight", 1.0f}, Init{"bias", 0.0f},
                                                        Init{"running_mean", 0.0f}, Init{"running_var", 1.0f}}) {
    const auto key = tensor_key(l.name, role);
    out.tensors[key] = filled(key, n, value);
  }
}

void finish_report(PruneReport& report, const ModelManifest& before, const ModelManifest& after) {
  const auto cmp = compare_models(before, after);
  report.flops_before = *cmp.base_macs;
  report.params_before = *cmp.base_params;
  report.flops_after = cmp.total_macs;
  report.params_after = cmp.total_params;
  report.pruning_rate_flops = *cmp.pruning_rate_flops;
  report.pruning_rate_params = *cmp.pruning_rate_params;
}

void validate_output(const TensorArchive& out) {
  try {
    out.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::reconciliation_failure, std::string("pruned archive is inconsistent: ") + e.what());
  }
}

void check_plan_covers(const ModelManifest& m, const PrunePlan& plan) {
  for (const auto& l : m.layers) {
    if (l.has_weights() && !plan.sketch_sizes.contains(l.name)) {
      throw Error(ErrorCode::invalid_argument, "plan has no sketch size for layer '" + l.name + "'");
    }
  }
}

// Runs fn(k) for k in [0, n) on up to `threads` workers. The first exception
// in index order is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t k = 0; k < n; ++k) {
      try {
        fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < n; k = next++) {
          try {
            fn(k);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct LayerJob {
  std::size_t index = 0;
  WeightTensor weight;
  std::optional<WeightTensor> bias;
  std::vector<SketchStep> steps;
  std::vector<std::string> warnings;
  bool rewritten = false;
};

Eigen::MatrixXd pad_columns(const Eigen::MatrixXd& m, Eigen::Index cols) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), cols);
  out.leftCols(m.cols()) = m;
  return out;
}

// Sketches `m` to `width` columns and records the step. The returned matrix
// is the raw (unnormalized) sketch.
FilterMatrix sketch_axis(const FilterMatrix& m, int width, const std::string& layer, const char* axis,
                         std::uint64_t stream, const SketchOptions& options, LayerJob& job) {
  SketchStep step;
  step.layer = layer;
  step.axis = axis;
  step.columns = static_cast<int>(m.cols());
  step.sketch_width = width;

  FilterMatrix omega;
  if (options.method == SketchMethod::fd) {
    auto r = fd_sketch(m, width);
    step.shrink_count = r.shrink_count;
    step.elapsed_seconds = r.elapsed_seconds;
    omega = std::move(r.omega);
  } else {
    const auto start = std::chrono::steady_clock::now();
    const int k = static_cast<int>(std::min<Eigen::Index>({width, m.rows(), m.cols()}));
    omega = FilterMatrix(pad_columns(svd_truncate(m, k).values, width));
    step.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  if (options.compute_quality) step.quality = sketch_quality(m, omega, width);

  if (omega.values.isZero(0.0)) {
    step.fallback = true;
    omega = select_columns(m, random_subset(static_cast<int>(m.cols()), width, options.fallback_seed, stream));
    job.warnings.push_back("layer '" + layer + "' " + axis +
                           " axis: sketch is all zeros; fell back to random column subsampling");
  }
  job.steps.push_back(std::move(step));
  return omega;
}

}  // namespace

PrunePlan build_plan(const ModelManifest& manifest, double global_rate, const PlanOptions& options) {
  check_rate(global_rate, "global");
  for (const auto& [name, rate] : options.overrides) {
    const auto& l = manifest.layer(name);  // throws unknown_layer
    check_rate(rate, "override for '" + name + "'");
    if (!l.has_weights()) {
      throw Error(ErrorCode::invalid_argument, "layer '" + name + "' has no filters to prune");
    }
    if (!effectively_prunable(l, options)) {
      throw Error(ErrorCode::invalid_argument,
                  "layer '" + name + "' is not prunable in this manifest (see --prune-all)");
    }
  }

  PrunePlan plan;
  plan.global_rate = global_rate;
  for (const auto& l : manifest.layers) {
    if (!l.has_weights()) continue;
    double rate = 1.0;
    if (effectively_prunable(l, options)) {
      const auto it = options.overrides.find(l.name);
      rate = it != options.overrides.end() ? it->second : global_rate;
    }
    plan.rates[l.name] = rate;
  }

  std::map<std::string, std::vector<const LayerSpec*>> groups;
  for (const auto& l : manifest.layers) {
    if (!l.prune_group.empty()) groups[l.prune_group].push_back(&l);
  }
  for (const auto& [group, members] : groups) {
    double rate = 1.0;
    bool pinned = false;
    for (const auto* l : members) {
      if (!l->has_weights()) continue;
      if (!effectively_prunable(*l, options)) pinned = true;
      rate = std::min(rate, plan.rates[l->name]);
    }
    if (pinned) rate = 1.0;
    plan.group_rates[group] = rate;
    for (const auto* l : members) {
      if (l->has_weights()) plan.rates[l->name] = rate;
    }
  }

  for (const auto& l : manifest.layers) {
    if (l.has_weights()) plan.sketch_sizes[l.name] = sketch_size(plan.rates[l.name], l.out_channels);
  }
  return plan;
}

std::vector<int> planned_widths(const ModelManifest& manifest, const PrunePlan& plan) {
  check_plan_covers(manifest, plan);
  std::vector<int> widths(manifest.layers.size(), 0);
  for (auto i : manifest.topological_order()) {
    const auto& l = manifest.layers[i];
    if (l.has_weights()) {
      widths[i] = plan.sketch_sizes.at(l.name);
      continue;
    }
    const int in = input_width(manifest, i, widths);
    if (l.kind == LayerKind::pool && l.out_channels != l.in_channels) {
      int w = in + (l.out_channels - l.in_channels);
      if (!l.prune_group.empty()) {
        const auto it = plan.group_rates.find(l.prune_group);
        w = sketch_size(it == plan.group_rates.end() ? 1.0 : it->second, l.out_channels);
      }
      if (w < in) {
        throw Error(ErrorCode::reconciliation_failure,
                    "padding pool '" + l.name + "' would have to shrink its input");
      }
      widths[i] = w;
    } else {
      widths[i] = in;
    }
  }
  std::map<std::string, int> group_width;
  for (std::size_t i = 0; i < manifest.layers.size(); ++i) {
    const auto& g = manifest.layers[i].prune_group;
    if (g.empty()) continue;
    const auto [it, inserted] = group_width.emplace(g, widths[i]);
    if (!inserted && it->second != widths[i]) {
      throw Error(ErrorCode::reconciliation_failure, "prune group '" + g + "' members disagree on width");
    }
  }
  return widths;
}

bool PruneReport::all_certificates_pass() const {
  return std::all_of(steps.begin(), steps.end(), [](const SketchStep& s) {
    return !s.quality || (s.quality->bound_satisfied && s.quality->psd_ordered);
  });
}

PruneOutcome sketch_model(const TensorArchive& archive, const PrunePlan& plan, const SketchOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  archive.validate();
  const auto& base = archive.manifest;
  const auto widths = planned_widths(base, plan);

  PruneOutcome result;
  result.report.method = options.method == SketchMethod::fd ? "fd" : "svdtrunc";
  auto& out = result.archive;
  out.manifest = pruned_manifest(base, widths);

  std::vector<LayerJob> jobs;
  for (std::size_t i = 0; i < base.layers.size(); ++i) {
    if (!base.layers[i].has_weights()) continue;
    jobs.emplace_back();
    jobs.back().index = i;
  }

  parallel_for(jobs.size(), options.threads, [&](std::size_t k) {
    auto& job = jobs[k];
    const auto& src = base.layers[job.index];
    const auto& dst = out.manifest.layers[job.index];
    job.weight = archive.tensor(src.name, "weight");
    if (src.bias) job.bias = archive.tensor(src.name, "bias");
    if (dst.in_channels > src.in_channels || dst.out_channels > src.out_channels) {
      throw Error(ErrorCode::reconciliation_failure, "layer '" + src.name + "' would grow");
    }
    if (dst.in_channels == src.in_channels && dst.out_channels == src.out_channels) return;

    job.rewritten = true;
    const auto stream = static_cast<std::uint64_t>(job.index) * 2;
    auto w4 = as_4d(job.weight);
    FilterMatrix last;
    enum class Axis { none, input, output } last_axis = Axis::none;

    if (dst.in_channels < src.in_channels) {
      last = sketch_axis(flatten_input_channels(w4), dst.in_channels, src.name, "input", stream, options, job);
      last_axis = Axis::input;
      if (dst.out_channels < src.out_channels) {
        w4 = unflatten_input_channels(last, src.out_channels, src.kernel_h, src.kernel_w, w4.name);
      }
    }
    if (dst.out_channels < src.out_channels) {
      last = sketch_axis(flatten_filters(w4), dst.out_channels, src.name, "output", stream + 1, options, job);
      last_axis = Axis::output;
    }

    const SketchResult wrapped{.omega = std::move(last)};
    const auto normalized = frobenius_normalize(wrapped);
    WeightTensor rebuilt =
        last_axis == Axis::output
            ? unflatten_filters(normalized, dst.in_channels, src.kernel_h, src.kernel_w, job.weight.name)
            : unflatten_input_channels(normalized, src.out_channels, src.kernel_h, src.kernel_w,
                                       job.weight.name);
    job.weight = restore_rank(std::move(rebuilt), src);
    if (job.bias && dst.out_channels < src.out_channels) {
      job.bias = filled(job.bias->name, dst.out_channels, 0.0f);
    }
  });

  std::vector<bool> rewritten(base.layers.size(), false);
  for (auto& job : jobs) {
    rewritten[job.index] = job.rewritten;
    out.tensors[job.weight.name] = std::move(job.weight);
    if (job.bias) out.tensors[job.bias->name] = std::move(*job.bias);
    for (auto& s : job.steps) result.report.steps.push_back(std::move(s));
    for (auto& w : job.warnings) result.report.warnings.push_back(std::move(w));
  }

  for (std::size_t i = 0; i < base.layers.size(); ++i) {
    const auto& l = base.layers[i];
    if (l.kind != LayerKind::bn) continue;
    const auto prods = base.producers(i);
    const bool after_rewrite = std::any_of(prods.begin(), prods.end(), [&](auto p) { return rewritten[p]; });
    if (after_rewrite || widths[i] != l.out_channels) {
      reset_batchnorm(out, out.manifest.layers[i]);
    } else {
      for (const auto& t : expected_tensors(l)) {
        const auto key = tensor_key(l.name, t.role);
        out.tensors[key] = archive.tensors.at(key);
      }
    }
  }

  validate_output(out);
  finish_report(result.report, base, out.manifest);
  result.report.elapsed_total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<int> random_subset(int n, int k, std::uint64_t seed, std::uint64_t stream) {
  if (k < 0 || k > n) throw Error(ErrorCode::invalid_argument, "subset size exceeds population");
  CounterRng rng(seed, stream << 32);
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

FilterMatrix select_columns(const FilterMatrix& w, const std::vector<int>& keep) {
  FilterMatrix out(w.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    if (keep[j] < 0 || keep[j] >= w.cols()) throw Error(ErrorCode::invalid_argument, "column index out of range");
    out.values.col(static_cast<Eigen::Index>(j)) = w.values.col(keep[j]);
  }
  return out;
}

FilterMatrix svd_truncate(const FilterMatrix& w, int k) {
  if (k < 1 || k > std::min(w.rows(), w.cols())) {
    throw Error(ErrorCode::invalid_argument, "truncation rank " + std::to_string(k) + " outside [1, " +
                                                 std::to_string(std::min(w.rows(), w.cols())) + "]");
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(w.values, Eigen::ComputeThinU);
  if (svd.info() != Eigen::Success) throw Error(ErrorCode::numerical_failure, "SVD did not converge");
  Eigen::MatrixXd u = svd.matrixU().leftCols(k);
  canonicalize_signs(u, nullptr);
  return FilterMatrix(u * svd.singularValues().head(k).asDiagonal());
}

PruneOutcome random_subsample(const TensorArchive& archive, const PrunePlan& plan, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  archive.validate();
  const auto& base = archive.manifest;
  const auto widths = planned_widths(base, plan);
  const auto n = base.layers.size();

  PruneOutcome result;
  result.report.method = "random";
  auto& out = result.archive;
  out.manifest = pruned_manifest(base, widths);

  const auto identity = [](int c) {
    std::vector<int> v(static_cast<std::size_t>(c));
    std::iota(v.begin(), v.end(), 0);
    return v;
  };

  // One subset per prune group, drawn on the stream of its first member.
  std::map<std::string, std::vector<int>> group_keep;
  const auto own_subset = [&](std::size_t i) {
    const auto& l = base.layers[i];
    if (widths[i] == l.out_channels) return identity(l.out_channels);
    if (l.prune_group.empty()) return random_subset(l.out_channels, widths[i], seed, i);
    auto it = group_keep.find(l.prune_group);
    if (it == group_keep.end()) {
      it = group_keep.emplace(l.prune_group, random_subset(l.out_channels, widths[i], seed, i)).first;
    }
    return it->second;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!base.layers[i].prune_group.empty()) own_subset(i);
  }

  std::vector<std::vector<int>> kept_out(n);
  std::vector<std::vector<int>> kept_in(n);
  for (auto i : base.topological_order()) {
    const auto& l = base.layers[i];
    const auto prods = base.producers(i);
    std::vector<int> in;
    if (prods.empty()) {
      in = identity(base.input_channels);
    } else if (l.kind == LayerKind::concat) {
      int offset = 0;
      for (auto p : prods) {
        for (int c : kept_out[p]) in.push_back(offset + c);
        offset += base.layers[p].out_channels;
      }
    } else {
      in = kept_out[prods.front()];
      for (auto p : prods) {
        if (kept_out[p] != in) {
          throw Error(ErrorCode::reconciliation_failure,
                      "inputs of '" + l.name + "' keep different channel subsets");
        }
      }
    }
    kept_in[i] = in;

    if (l.has_weights()) {
      kept_out[i] = own_subset(i);
    } else if (l.kind == LayerKind::pool && l.out_channels != l.in_channels) {
      if (!l.prune_group.empty()) {
        kept_out[i] = own_subset(i);
      } else {
        const int pad = l.out_channels - l.in_channels;
        const int lo = pad / 2;
        std::vector<int> v;
        for (int c = 0; c < lo; ++c) v.push_back(c);
        for (int c : in) v.push_back(lo + c);
        for (int c = lo + l.in_channels; c < l.out_channels; ++c) v.push_back(c);
        kept_out[i] = std::move(v);
      }
    } else {
      kept_out[i] = in;
    }
    if (static_cast<int>(kept_out[i].size()) != widths[i]) {
      throw Error(ErrorCode::reconciliation_failure, "layer '" + l.name + "' kept width disagrees with plan");
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = base.layers[i];
    if (l.has_weights()) {
      const auto w = as_4d(archive.tensor(l.name, "weight"));
      const std::int64_t cin = w.shape[1];
      const std::int64_t k = w.shape[2] * w.shape[3];
      const auto& ko = kept_out[i];
      const auto& ki = kept_in[i];
      WeightTensor sliced;
      sliced.name = w.name;
      sliced.shape = {static_cast<std::int64_t>(ko.size()), static_cast<std::int64_t>(ki.size()), w.shape[2],
                      w.shape[3]};
      sliced.data.reserve(ko.size() * ki.size() * static_cast<std::size_t>(k));
      for (int o : ko) {
        for (int c : ki) {
          const auto* src = w.data.data() + (o * cin + c) * k;
          sliced.data.insert(sliced.data.end(), src, src + k);
        }
      }
      auto key = sliced.name;
      out.tensors[key] = restore_rank(std::move(sliced), l);
      if (l.bias) {
        const auto& b = archive.tensor(l.name, "bias");
        WeightTensor nb{b.name, {static_cast<std::int64_t>(ko.size())}, {}};
        for (int o : ko) nb.data.push_back(b.data[static_cast<std::size_t>(o)]);
        out.tensors[nb.name] = std::move(nb);
      }
      if (ko.size() < static_cast<std::size_t>(l.out_channels)) {
        SketchStep step;
        step.layer = l.name;
        step.axis = "output";
        step.columns = l.out_channels;
        step.sketch_width = static_cast<int>(ko.size());
        result.report.steps.push_back(std::move(step));
      }
    } else if (l.kind == LayerKind::bn) {
      for (const auto& t : expected_tensors(l)) {
        const auto& src = archive.tensor(l.name, t.role);
        WeightTensor nt{src.name, {static_cast<std::int64_t>(kept_out[i].size())}, {}};
        for (int c : kept_out[i]) nt.data.push_back(src.data[static_cast<std::size_t>(c)]);
        out.tensors[nt.name] = std::move(nt);
      }
    }
  }

  validate_output(out);
  finish_report(result.report, base, out.manifest);
  result.report.elapsed_total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace sketchprune
