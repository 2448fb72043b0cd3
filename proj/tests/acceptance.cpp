// One PASS/FAIL line per acceptance criterion; exits 1 if any fails.

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "sketchprune/analysis.hpp"
#include "sketchprune/archive.hpp"
#include "sketchprune/fd_sketch.hpp"
#include "sketchprune/planner.hpp"
#include "sketchprune/report_json.hpp"
#include "sketchprune/testkit.hpp"

using namespace sketchprune;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string num(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

fs::path data_dir() { return SKETCHPRUNE_DATA_DIR; }

ModelManifest arch(const std::string& name) { return load_manifest(data_dir() / "arch" / (name + ".json")); }

struct Run {
  int status = -1;
  std::string out;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + SKETCHPRUNE_CLI + "\" " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Scratch {
  fs::path path = fs::temp_directory_path() / "sketchprune_acceptance";
  Scratch() {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() { fs::remove_all(path); }
};

// Shared by the certificate and PSD criteria.
constexpr std::uint64_t kSweepSeed = 1;

struct SweepResult {
  int bound_violations = 0;
  int psd_violations = 0;
  double worst_ratio = 0.0;
  double worst_min_eig = 0.0;
  double seconds = 0.0;
};

const SweepResult& certificate_sweep() {
  static const SweepResult result = [] {
    SweepResult r;
    const auto start = std::chrono::steady_clock::now();
    for (const auto& s : testkit::sweep_shapes(kSweepSeed, 100)) {
      const auto w = testkit::random_matrix(s.seed, s.d, s.c);
      const auto q = sketch_quality(w, fd_sketch(w, s.ell).omega, s.ell);
      const double slack = kCertificateSlack * q.w_fro_sq;
      r.bound_violations += !(q.gram_err_spec <= q.epsilon_bound + slack);
      r.psd_violations += !(q.min_eig_diff >= -slack);
      r.worst_ratio = std::max(r.worst_ratio, q.gram_err_spec / q.epsilon_bound);
      r.worst_min_eig = std::min(r.worst_min_eig, q.min_eig_diff / q.w_fro_sq);
    }
    r.seconds = seconds_since(start);
    return r;
  }();
  return result;
}

Outcome spectral_certificate() {
  const auto& r = certificate_sweep();
  return {r.bound_violations == 0 && r.seconds < 60.0,
          std::to_string(r.bound_violations) + " violations in 100 cases, worst lambda_max / bound " +
              num(r.worst_ratio) + ", " + num(r.seconds) + " s (limit 60 s)"};
}

Outcome psd_sandwich() {
  const auto& r = certificate_sweep();
  return {r.psd_violations == 0, std::to_string(r.psd_violations) +
                                     " violations in 100 cases, min lambda_min / ||W||_F^2 = " +
                                     num(r.worst_min_eig) + " (limit -1e-6)"};
}

Outcome scale_equivariance() {
  int failures = 0;
  double worst = 0.0;
  for (const auto& s : testkit::sweep_shapes(2, 25)) {
    const auto w = testkit::random_matrix(s.seed, s.d, s.c);
    const Eigen::MatrixXd base = fd_sketch(w, s.ell).omega.values;
    for (double beta : {0.5, 2.0, 10.0}) {
      const Eigen::MatrixXd expect = beta * base;
      const Eigen::MatrixXd got = fd_sketch(FilterMatrix(Eigen::MatrixXd(beta * w.values)), s.ell).omega.values;
      bool ok = true;
      for (Eigen::Index i = 0; i < got.size(); ++i) {
        const double err = std::abs(got.data()[i] - expect.data()[i]);
        const double mag = std::abs(expect.data()[i]);
        if (err == 0.0) continue;
        const double rel = mag > 0.0 ? err / mag : std::numeric_limits<double>::infinity();
        worst = std::max(worst, rel);
        ok = ok && rel <= 1e-5;
      }
      failures += !ok;
    }
  }
  return {failures == 0, std::to_string(failures) + " of 75 (matrix, beta) pairs fail, worst elementwise relative error " +
                             num(worst) + " (limit 1e-5)"};
}

Outcome oracle_equivalence() {
  const auto cases = testkit::load_golden(data_dir() / "golden_cases.json");
  int failures = 0;
  double worst = 0.0;
  for (const auto& g : cases) {
    const auto w = testkit::random_matrix(g.seed, g.d, g.c);
    const auto reference = testkit::reference_fd(w, g.ell);
    const double diff = (fd_sketch(w, g.ell).omega.values - reference.values).cwiseAbs().maxCoeff();
    worst = std::max(worst, diff);
    const bool ok = testkit::checksum(w) == g.input_checksum &&
                    testkit::checksum(reference) == g.omega_checksum && diff <= 1e-10;
    failures += !ok;
  }
  return {cases.size() == 100 && failures == 0,
          std::to_string(cases.size()) + " golden cases, " + std::to_string(failures) +
              " failures, worst |fd - reference| " + num(worst) + " (limit 1e-10)"};
}

Outcome comparator_ordering() {
  int ordered = 0;
  int svd_le_fd = 0;
  int fd_le_random = 0;
  for (const auto& s : testkit::sweep_shapes(3, 100)) {
    const int k = std::min(s.ell, s.d);
    const auto w = testkit::random_matrix(s.seed, s.d, s.c);
    const double e_svd = gram_difference(w.values, svd_truncate(w, k).values).lambda_max;
    const double e_fd = gram_difference(w.values, fd_sketch(w, k).omega.values).lambda_max;
    const double e_rand =
        gram_difference(w.values, select_columns(w, random_subset(s.c, k, s.seed, 0)).values).lambda_max;
    svd_le_fd += e_svd <= e_fd;
    fd_le_random += e_fd <= e_rand;
    ordered += e_svd <= e_fd && e_fd <= e_rand;
  }
  return {ordered >= 95, std::to_string(ordered) + "/100 trials ordered (need 95); svd <= fd " +
                             std::to_string(svd_le_fd) + "/100, fd <= random " + std::to_string(fd_le_random) +
                             "/100"};
}

Outcome complexity_accounting() {
  struct Row {
    const char* arch;
    double flops;
    double params;
  };
  const std::array<Row, 4> rows{{{"resnet56", 125.49e6, 0.85e6},
                                 {"resnet110", 252.89e6, 1.72e6},
                                 {"googlenet", 1.52e9, 6.15e6},
                                 {"resnet50", 4.09e9, 25.50e6}}};
  bool pass = true;
  std::string detail;
  for (const auto& row : rows) {
    const auto r = run_cli(std::string("flops --arch ") + row.arch);
    double df = 1.0;
    double dp = 1.0;
    if (r.status == 0) {
      const auto j = nlohmann::json::parse(r.out);
      df = std::abs(j.at("total_macs").get<double>() / row.flops - 1.0);
      dp = std::abs(j.at("total_params").get<double>() / row.params - 1.0);
    }
    pass = pass && r.status == 0 && df <= 0.02 && dp <= 0.02;
    if (!detail.empty()) detail += "; ";
    detail += std::string(row.arch) + " FLOPs " + num(100 * df, 2) + "% params " + num(100 * dp, 2) + "%";
  }
  return {pass, detail + " off (limit 2%)"};
}

Outcome sketch_efficiency() {
  const auto a = testkit::random_archive(arch("resnet50"), 50);
  const auto plan = build_plan(a.manifest, 0.5);
  SketchOptions options;
  options.threads = 1;
  options.compute_quality = false;
  const auto start = std::chrono::steady_clock::now();
  const auto out = sketch_model(a, plan, options);
  const double elapsed = seconds_since(start);
  return {elapsed < 10.0, "resnet50 at rate 0.5, " + std::to_string(out.report.steps.size()) +
                              " sketch steps, " + num(elapsed) + " s single-threaded (limit 10 s)"};
}

Outcome pipeline_identity() {
  Scratch scratch;
  const auto a = testkit::random_archive(arch("resnet56"), 56);
  const auto same = sketch_model(a, build_plan(a.manifest, 1.0));
  const bool identity = same.archive.tensors == a.tensors &&
                        manifest_to_json(same.archive.manifest) == manifest_to_json(a.manifest);

  const auto pruned = sketch_model(a, build_plan(a.manifest, 0.6));
  save_archive(pruned.archive, scratch.path / "pruned");
  bool reloads = true;
  try {
    load_archive(scratch.path / "pruned");
  } catch (const std::exception&) {
    reloads = false;
  }
  int failing = 0;
  for (const auto& s : pruned.report.steps) {
    failing += !(s.quality && s.quality->bound_satisfied && s.quality->psd_ordered);
  }
  return {identity && reloads && failing == 0 && !pruned.report.steps.empty(),
          std::string("rate 1.0 ") + (identity ? "bit-identical" : "DIFFERS") + "; resnet56 at 0.6: " +
              (reloads ? "re-validates" : "FAILS validation") + ", " + std::to_string(failing) + " of " +
              std::to_string(pruned.report.steps.size()) + " layer certificates fail, FLOPs pruned " +
              num(pruned.report.pruning_rate_flops) + "%"};
}

Outcome cli_determinism() {
  Scratch scratch;
  save_archive(testkit::random_archive(arch("resnet56"), 9), scratch.path / "model");
  std::array<std::string, 2> payloads;
  std::array<int, 2> status{};
  for (int i = 0; i < 2; ++i) {
    const auto out = scratch.path / ("out" + std::to_string(i));
    const auto r = run_cli("sketch --model \"" + (scratch.path / "model").string() + "\" --rate 0.6 --out \"" +
                           out.string() + "\"");
    status[static_cast<std::size_t>(i)] = r.status;
    if (r.status == 0) {
      payloads[static_cast<std::size_t>(i)] =
          deterministic_payload(nlohmann::ordered_json::parse(r.out)).dump();
    }
  }
  bool files_equal = true;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(scratch.path / "out0")) {
    ++files;
    const auto twin = scratch.path / "out1" / e.path().filename();
    files_equal = files_equal && fs::exists(twin) && slurp(e.path()) == slurp(twin);
  }
  const bool reports_equal = !payloads[0].empty() && payloads[0] == payloads[1];
  return {status[0] == 0 && status[1] == 0 && reports_equal && files_equal,
          "exit " + std::to_string(status[0]) + "/" + std::to_string(status[1]) + ", report payloads " +
              (reports_equal ? "identical" : "DIFFER") + ", " + std::to_string(files) + " archive files " +
              (files_equal ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
  const std::array<std::pair<const char*, std::function<Outcome()>>, 10> criteria{{
      {"certificate: lambda_max(WW^T - OO^T) <= (2/l)||W||_F^2 over 100 seeded matrices", spectral_certificate},
      {"psd ordering: lambda_min(WW^T - OO^T) >= -1e-6||W||_F^2 on the same sweep", psd_sandwich},
      {"scale equivariance: fd(bW) == b fd(W) for b in {0.5, 2, 10}", scale_equivariance},
      {"oracle equivalence on the committed golden cases", oracle_equivalence},
      {"comparator ordering: svd_truncate <= fd <= random in spectral Gram error", comparator_ordering},
      {"complexity accounting: flops --arch matches the reference base counts", complexity_accounting},
      {"sketch efficiency: resnet50-shaped archive in under 10 s", sketch_efficiency},
      {"pipeline identity and end-to-end certificates", pipeline_identity},
      {"cli determinism: identical sketch invocations", cli_determinism},
      {"cli rejects an out-of-range rate with exit 1", [] {
         const auto r = run_cli("sketch --model missing --rate 1.5 --out unused");
         return Outcome{r.status == 1, "exit " + std::to_string(r.status)};
       }},
  }};
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " -- " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " acceptance criteria pass" << std::endl;
  return failed == 0 ? 0 : 1;
}
