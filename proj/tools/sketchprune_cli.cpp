#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sketchprune/analysis.hpp"
#include "sketchprune/archive.hpp"
#include "sketchprune/error.hpp"
#include "sketchprune/fd_sketch.hpp"
#include "sketchprune/planner.hpp"
#include "sketchprune/report_json.hpp"
#include "sketchprune/testkit.hpp"

using namespace sketchprune;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kValidation = 1, kNumerical = 2, kCertificate = 3 };

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::numerical_failure:
    case ErrorCode::degenerate_sketch:
    case ErrorCode::reconciliation_failure:
      return kNumerical;
    default:
      return kValidation;
  }
}

void emit_error(std::string_view code, std::string_view message) {
  ordered_json j;
  j["error"] = code;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

fs::path data_dir() {
  if (const char* env = std::getenv("SKETCHPRUNE_DATA_DIR"); env && *env) return env;
  return SKETCHPRUNE_DATA_DIR;
}

unsigned thread_count() {
  const char* env = std::getenv("SKETCHPRUNE_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const auto n = std::strtoul(env, &end, 10);
  if (*end != '\0') throw Error(ErrorCode::invalid_argument, "SKETCHPRUNE_THREADS must be a non-negative integer");
  return static_cast<unsigned>(n);
}

ModelManifest builtin_arch(const std::string& name) {
  return load_manifest(data_dir() / "arch" / (name + ".json"));
}

// A directory is an archive; a file is a bare manifest.
ModelManifest manifest_at(const fs::path& p) {
  if (fs::is_directory(p)) return load_archive(p).manifest;
  return load_manifest(p);
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string millions(std::int64_t v) { return fmt(static_cast<double>(v) / 1e6, 3) + "M"; }

void print_json(const ordered_json& j) { std::cout << j.dump(2) << '\n'; }

struct Options {
  std::string format = "json";

  std::string model;
  std::string out;
  std::string report;
  double rate = 0.0;
  std::vector<std::string> overrides;
  std::string baseline = "fd";
  std::uint64_t seed = 0;
  bool prune_all = false;
  bool no_quality = false;
  bool quality = false;

  std::string golden;
  int sweep = 100;
  std::uint64_t sweep_seed = 1;

  std::string histogram;

  std::string arch;
  std::string manifest;
  std::string pruned;

  int repeat = 1;
};

std::map<std::string, double> parse_overrides(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.rfind('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::invalid_argument, "override '" + item + "' is not layer=rate");
    }
    double rate = 0.0;
    try {
      std::size_t used = 0;
      rate = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::invalid_argument, "override '" + item + "' has a malformed rate");
    }
    if (!(rate > 0.0 && rate <= 1.0)) {
      throw Error(ErrorCode::rate_out_of_range, "override '" + item + "' is outside (0, 1]");
    }
    out[item.substr(0, eq)] = rate;
  }
  return out;
}

void print_prune_table(const PruneReport& r) {
  std::cout << std::left << std::setw(28) << "layer" << std::setw(8) << "axis" << std::right
            << std::setw(6) << "c" << std::setw(8) << "c~" << std::setw(8) << "shrinks"
            << std::setw(14) << "gram_err_fro" << std::setw(14) << "eps*|W|^2" << std::setw(6) << "ok"
            << '\n';
  for (const auto& s : r.steps) {
    std::cout << std::left << std::setw(28) << s.layer << std::setw(8) << s.axis << std::right
              << std::setw(6) << s.columns << std::setw(8) << s.sketch_width << std::setw(8)
              << s.shrink_count;
    if (s.quality) {
      std::cout << std::setw(14) << fmt(s.quality->gram_err_fro) << std::setw(14)
                << fmt(s.quality->epsilon_bound) << std::setw(6)
                << (s.quality->bound_satisfied && s.quality->psd_ordered ? "yes" : "NO");
    } else {
      std::cout << std::setw(14) << "-" << std::setw(14) << "-" << std::setw(6) << "-";
    }
    std::cout << (s.fallback ? "  fallback" : "") << '\n';
  }
  for (const auto& w : r.warnings) std::cout << "warning: " << w << '\n';
  std::cout << "FLOPs  " << millions(r.flops_before) << " -> " << millions(r.flops_after) << " ("
            << fmt(r.pruning_rate_flops, 1) << "%)\n";
  std::cout << "Params " << millions(r.params_before) << " -> " << millions(r.params_after) << " ("
            << fmt(r.pruning_rate_params, 1) << "%)\n";
  const bool certified = std::any_of(r.steps.begin(), r.steps.end(), [](const SketchStep& s) { return s.quality.has_value(); });
  std::cout << "certificates: " << (!certified ? "not computed" : r.all_certificates_pass() ? "pass" : "FAIL") << '\n';
}

void print_complexity_table(const ComplexityReport& r) {
  std::cout << std::left << std::setw(28) << "layer" << std::setw(8) << "kind" << std::right
            << std::setw(10) << "output" << std::setw(14) << "MACs" << std::setw(12) << "params" << '\n';
  for (const auto& l : r.layers) {
    if (l.macs == 0 && l.params == 0) continue;
    std::cout << std::left << std::setw(28) << l.layer << std::setw(8) << to_string(l.kind) << std::right
              << std::setw(10) << (std::to_string(l.output.height) + "x" + std::to_string(l.output.width))
              << std::setw(14) << l.macs << std::setw(12) << l.params << '\n';
  }
  std::cout << "total FLOPs  " << r.total_macs << " (" << millions(r.total_macs) << ")";
  if (r.pruning_rate_flops) std::cout << "  pruned " << fmt(*r.pruning_rate_flops, 1) << "%";
  std::cout << "\ntotal params " << r.total_params << " (" << millions(r.total_params) << ")";
  if (r.pruning_rate_params) std::cout << "  pruned " << fmt(*r.pruning_rate_params, 1) << "%";
  std::cout << "\nconvention: " << kFlopsConvention << '\n';
}

int cmd_inspect(const Options& o) {
  const auto a = load_archive(o.model);
  const auto cx = count_flops_params(a.manifest);
  std::int64_t values = 0;
  for (const auto& [name, t] : a.tensors) values += t.numel();
  if (o.format == "table") {
    std::cout << "model " << a.manifest.name << ": " << a.manifest.layers.size() << " layers, "
              << a.manifest.edges.size() << " edges, " << a.tensors.size() << " tensors\n";
    for (const auto& l : a.manifest.layers) {
      std::cout << std::left << std::setw(28) << l.name << std::setw(8) << to_string(l.kind) << std::right
                << std::setw(6) << l.in_channels << " -> " << std::setw(5) << l.out_channels;
      if (l.has_weights()) std::cout << "  " << l.kernel_h << "x" << l.kernel_w << "/" << l.stride;
      if (!l.prune_group.empty()) std::cout << "  group=" << l.prune_group;
      if (l.prunable) std::cout << "  prunable";
      std::cout << '\n';
    }
    std::cout << "FLOPs " << millions(cx.total_macs) << ", params " << millions(cx.total_params) << '\n';
    return kOk;
  }
  ordered_json j;
  j["name"] = a.manifest.name;
  j["layers"] = a.manifest.layers.size();
  j["edges"] = a.manifest.edges.size();
  j["tensors"] = a.tensors.size();
  j["tensor_values"] = values;
  j["total_macs"] = cx.total_macs;
  j["total_params"] = cx.total_params;
  j["manifest"] = manifest_to_json(a.manifest);
  print_json(j);
  return kOk;
}

int cmd_sketch(const Options& o) {
  if (!(o.rate > 0.0 && o.rate <= 1.0)) {
    throw Error(ErrorCode::rate_out_of_range, "--rate " + std::to_string(o.rate) + " is outside (0, 1]");
  }
  PlanOptions po;
  po.overrides = parse_overrides(o.overrides);
  po.prune_all = o.prune_all;

  const auto archive = load_archive(o.model);
  const auto plan = build_plan(archive.manifest, o.rate, po);

  PruneOutcome outcome;
  if (o.baseline == "random") {
    outcome = random_subsample(archive, plan, o.seed);
  } else {
    SketchOptions so;
    so.method = o.baseline == "svdtrunc" ? SketchMethod::svd_truncate : SketchMethod::fd;
    so.compute_quality = !o.no_quality;
    so.threads = thread_count();
    so.fallback_seed = o.seed;
    outcome = sketch_model(archive, plan, so);
  }
  save_archive(outcome.archive, o.out);
  load_archive(o.out);

  ordered_json j = to_json(outcome.report);
  j["plan"] = to_json(plan);
  if (!o.report.empty()) {
    std::ofstream f(o.report);
    if (!f) throw Error(ErrorCode::io_error, "cannot write '" + o.report + "'");
    f << j.dump(2) << '\n';
  }
  if (o.format == "table") {
    print_prune_table(outcome.report);
  } else {
    print_json(j);
  }
  if (o.baseline == "fd" && !outcome.report.all_certificates_pass()) {
    emit_error("certificate_violation", "one or more layer sketches violate the error bound");
    return kCertificate;
  }
  return kOk;
}

int cmd_verify(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path golden_file = o.golden.empty() ? data_dir() / "golden_cases.json" : fs::path(o.golden);
  const auto cases = testkit::load_golden(golden_file);

  int oracle_fail = 0;
  double worst_diff = 0.0;
  ordered_json failures = ordered_json::array();
  for (const auto& g : cases) {
    const auto w = testkit::random_matrix(g.seed, g.d, g.c);
    bool ok = testkit::checksum(w) == g.input_checksum;
    const auto reference = testkit::reference_fd(w, g.ell);
    ok = ok && testkit::checksum(reference) == g.omega_checksum;
    const auto got = fd_sketch(w, g.ell);
    const double diff = (got.omega.values - reference.values).cwiseAbs().maxCoeff();
    worst_diff = std::max(worst_diff, diff);
    ok = ok && diff <= 1e-10;
    const auto q = sketch_quality(w, got.omega, g.ell);
    ok = ok && q.bound_satisfied && q.psd_ordered;
    if (!ok) {
      ++oracle_fail;
      failures.push_back({{"seed", g.seed}, {"max_abs_diff", diff}});
    }
  }

  int bound_fail = 0;
  int psd_fail = 0;
  double worst_ratio = 0.0;
  for (const auto& s : testkit::sweep_shapes(o.sweep_seed, o.sweep)) {
    const auto w = testkit::random_matrix(s.seed, s.d, s.c);
    const auto q = sketch_quality(w, fd_sketch(w, s.ell).omega, s.ell);
    bound_fail += !q.bound_satisfied;
    psd_fail += !q.psd_ordered;
    if (q.epsilon_bound > 0) worst_ratio = std::max(worst_ratio, q.gram_err_spec / q.epsilon_bound);
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const bool pass = oracle_fail == 0 && bound_fail == 0 && psd_fail == 0;
  if (o.format == "table") {
    std::cout << "golden cases      " << cases.size() << ", failures " << oracle_fail
              << ", worst |fd - reference| " << worst_diff << '\n';
    std::cout << "certificate sweep " << o.sweep << ", bound violations " << bound_fail
              << ", ordering violations " << psd_fail << ", worst err/bound " << fmt(worst_ratio) << '\n';
    std::cout << (pass ? "PASS" : "FAIL") << '\n';
  } else {
    ordered_json j;
    j["golden"] = {{"file", golden_file.string()},
                   {"cases", cases.size()},
                   {"failures", oracle_fail},
                   {"max_abs_diff", worst_diff},
                   {"failed", failures}};
    j["sweep"] = {{"seed", o.sweep_seed},
                  {"cases", o.sweep},
                  {"bound_violations", bound_fail},
                  {"psd_violations", psd_fail},
                  {"worst_error_to_bound", worst_ratio}};
    j["pass"] = pass;
    j["timing"] = {{"elapsed_total", elapsed}};
    print_json(j);
  }
  if (!pass) {
    emit_error("certificate_violation", "verification found failing cases");
    return kCertificate;
  }
  return kOk;
}

int cmd_stats(const Options& o) {
  const auto stats = weight_stats(load_archive(o.model));
  if (!o.histogram.empty()) {
    std::ofstream f(o.histogram);
    if (!f) throw Error(ErrorCode::io_error, "cannot write '" + o.histogram + "'");
    f << histogram_text(stats);
  }
  if (o.format == "table") {
    std::cout << std::left << std::setw(28) << "layer" << std::right << std::setw(10) << "count"
              << std::setw(14) << "mean" << std::setw(12) << "std" << std::setw(12) << "min" << std::setw(12)
              << "max" << "  zero-mean\n";
    for (const auto& l : stats.layers) {
      std::cout << std::left << std::setw(28) << l.layer << std::right << std::setw(10) << l.count
                << std::setw(14) << fmt(l.mean, 6) << std::setw(12) << fmt(l.std) << std::setw(12)
                << fmt(l.min) << std::setw(12) << fmt(l.max) << (l.zero_mean_violated ? "  violated" : "  ok")
                << '\n';
    }
    return kOk;
  }
  print_json(to_json(stats));
  return kOk;
}

int cmd_flops(const Options& o) {
  const int sources = !o.arch.empty() + !o.manifest.empty() + !o.model.empty();
  if (sources != 1) throw Error(ErrorCode::invalid_argument, "flops needs exactly one of --arch, --manifest, --model");
  const auto base = !o.arch.empty() ? builtin_arch(o.arch) : manifest_at(!o.manifest.empty() ? o.manifest : o.model);
  const auto report = o.pruned.empty() ? count_flops_params(base) : compare_models(base, manifest_at(o.pruned));
  if (o.format == "table") {
    print_complexity_table(report);
  } else {
    auto j = to_json(report);
    j["model"] = base.name;
    print_json(j);
  }
  return kOk;
}

int cmd_bench(const Options& o) {
  if (!(o.rate > 0.0 && o.rate <= 1.0)) {
    throw Error(ErrorCode::rate_out_of_range, "--rate " + std::to_string(o.rate) + " is outside (0, 1]");
  }
  if (o.repeat < 1) throw Error(ErrorCode::invalid_argument, "--repeat must be >= 1");
  const auto archive = testkit::random_archive(builtin_arch(o.arch), o.seed);
  const auto plan = build_plan(archive.manifest, o.rate, {.prune_all = o.prune_all});
  SketchOptions so;
  so.compute_quality = o.quality;
  so.threads = thread_count();
  std::vector<double> times;
  PruneReport last;
  for (int r = 0; r < o.repeat; ++r) {
    const auto start = std::chrono::steady_clock::now();
    last = sketch_model(archive, plan, so).report;
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  const double best = *std::min_element(times.begin(), times.end());
  if (o.format == "table") {
    std::cout << o.arch << " rate " << o.rate << ": " << last.steps.size() << " sketch steps, best of "
              << o.repeat << " = " << fmt(best, 3) << " s (threads " << so.threads << ")\n";
  } else {
    ordered_json j;
    j["arch"] = o.arch;
    j["rate"] = o.rate;
    j["threads"] = so.threads;
    j["steps"] = last.steps.size();
    j["flops_after"] = last.flops_after;
    j["timing"] = {{"best_seconds", best}, {"runs", times}};
    print_json(j);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequent Directions filter sketching for CNN pruning"};
  app.require_subcommand(1);
  Options o;

  const auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "table"}));
  };

  auto* inspect = app.add_subcommand("inspect", "Summarize an archive");
  inspect->add_option("--model", o.model, "Archive directory")->required();
  add_format(inspect);

  auto* sketch = app.add_subcommand("sketch", "Prune an archive");
  sketch->add_option("--model", o.model, "Input archive directory")->required();
  sketch->add_option("--rate", o.rate, "Global sketch rate in (0, 1]")->required();
  sketch->add_option("--out", o.out, "Output archive directory")->required();
  sketch->add_option("--override", o.overrides, "Per-layer rate, layer=rate (repeatable)");
  sketch->add_option("--baseline", o.baseline, "Method")->check(CLI::IsMember({"fd", "random", "svdtrunc"}));
  sketch->add_option("--seed", o.seed, "Seed for random subsampling and fallbacks");
  sketch->add_option("--report", o.report, "Also write the JSON report to this file");
  sketch->add_flag("--prune-all", o.prune_all, "Allow pruning layers the manifest pins");
  sketch->add_flag("--no-quality", o.no_quality, "Skip per-layer certificates");
  add_format(sketch);

  auto* verify = app.add_subcommand("verify", "Check the oracle golden cases and the error certificate");
  verify->add_option("--golden", o.golden, "Golden case file");
  verify->add_option("--sweep", o.sweep, "Number of random certificate cases")->check(CLI::NonNegativeNumber);
  verify->add_option("--sweep-seed", o.sweep_seed, "Master seed of the certificate sweep");
  add_format(verify);

  auto* stats = app.add_subcommand("stats", "Weight statistics per conv layer");
  stats->add_option("--model", o.model, "Archive directory")->required();
  stats->add_option("--histogram", o.histogram, "Write histogram columns to this file");
  add_format(stats);

  auto* flops = app.add_subcommand("flops", "Count FLOPs and parameters");
  flops->add_option("--arch", o.arch, "Built-in architecture")
      ->check(CLI::IsMember({"resnet56", "resnet110", "resnet50", "googlenet"}));
  flops->add_option("--manifest", o.manifest, "Manifest file");
  flops->add_option("--model", o.model, "Archive directory");
  flops->add_option("--pruned", o.pruned, "Pruned archive or manifest to compare against");
  add_format(flops);

  auto* bench = app.add_subcommand("bench", "Time sketching a random archive");
  bench->add_option("--arch", o.arch, "Built-in architecture")
      ->required()
      ->check(CLI::IsMember({"resnet56", "resnet110", "resnet50", "googlenet"}));
  o.rate = 0.5;
  bench->add_option("--rate", o.rate, "Global sketch rate")->capture_default_str();
  bench->add_option("--seed", o.seed, "Weight seed");
  bench->add_option("--repeat", o.repeat, "Runs; the best is reported");
  bench->add_flag("--prune-all", o.prune_all, "Allow pruning layers the manifest pins");
  bench->add_flag("--quality", o.quality, "Include per-layer certificates in the timing");
  add_format(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return kValidation;
  }

  try {
    if (*inspect) return cmd_inspect(o);
    if (*sketch) return cmd_sketch(o);
    if (*verify) return cmd_verify(o);
    if (*stats) return cmd_stats(o);
    if (*flops) return cmd_flops(o);
    if (*bench) return cmd_bench(o);
  } catch (const Error& e) {
    emit_error(to_string(e.code()), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    emit_error("io_error", e.what());
    return kValidation;
  }
  return kValidation;
}
