#include "doctest.h"

#include "sketchprune/archive.hpp"
#include "sketchprune/planner.hpp"
#include "sketchprune/report_json.hpp"
#include "sketchprune/testkit.hpp"

using namespace sketchprune;

TEST_CASE("prune report separates timing") {
  const auto m = load_manifest(std::filesystem::path(SKETCHPRUNE_DATA_DIR) / "arch" / "resnet56.json");
  const auto a = testkit::random_archive(m, 2);
  const auto plan = build_plan(m, 0.6);
  const auto j1 = to_json(sketch_model(a, plan).report);
  const auto j2 = to_json(sketch_model(a, plan).report);
  CHECK(j1.contains("timing"));
  CHECK(j1.at("all_certificates_pass") == true);
  CHECK(j1.at("layers").size() > 0);
  CHECK(j1.at("layers")[0].contains("bound_epsilon"));
  CHECK(j1.at("layers")[0].at("quality").contains("frobenius_form_holds"));
  CHECK_FALSE(j1.at("layers")[0].contains("elapsed_seconds"));
  const auto p1 = deterministic_payload(j1);
  CHECK_FALSE(p1.contains("timing"));
  CHECK(p1.dump() == deterministic_payload(j2).dump());
}

TEST_CASE("complexity report JSON") {
  const auto m = load_manifest(std::filesystem::path(SKETCHPRUNE_DATA_DIR) / "arch" / "resnet56.json");
  const auto j = to_json(compare_models(m, m));
  CHECK(j.at("convention") == kFlopsConvention);
  CHECK(j.at("pruning_rate_flops_pct") == 0.0);
  CHECK(j.at("total_macs") == count_flops_params(m).total_macs);
}

TEST_CASE("plan JSON lists every weighted layer") {
  const auto m = load_manifest(std::filesystem::path(SKETCHPRUNE_DATA_DIR) / "arch" / "resnet56.json");
  const auto j = to_json(build_plan(m, 0.6));
  CHECK(j.at("rates").size() == 56);
  CHECK(j.at("sketch_sizes").size() == 56);
}
