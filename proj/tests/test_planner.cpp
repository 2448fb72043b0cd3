#include "doctest.h"

#include "sketchprune/analysis.hpp"
#include "sketchprune/archive.hpp"
#include "sketchprune/error.hpp"
#include "sketchprune/fd_sketch.hpp"
#include "sketchprune/planner.hpp"
#include "sketchprune/testkit.hpp"

using namespace sketchprune;

namespace {

ModelManifest arch(const std::string& name) {
  return load_manifest(std::filesystem::path(SKETCHPRUNE_DATA_DIR) / "arch" / (name + ".json"));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::io_error;
}

LayerSpec conv(std::string name, int in, int out) {
  LayerSpec l;
  l.name = std::move(name);
  l.in_channels = in;
  l.out_channels = out;
  l.kernel_h = l.kernel_w = 3;
  l.padding = 1;
  l.prunable = true;
  return l;
}

// conv1[8,3,3,3] -> bn1 -> conv2[4,8,3,3]
ModelManifest toy() {
  ModelManifest m;
  m.name = "toy";
  m.input_channels = 3;
  m.input_spatial = {8, 8};
  m.num_classes = 4;
  LayerSpec bn;
  bn.name = "bn1";
  bn.kind = LayerKind::bn;
  bn.in_channels = bn.out_channels = 8;
  auto c2 = conv("conv2", 8, 4);
  c2.prunable = false;
  m.layers = {conv("conv1", 3, 8), bn, c2};
  m.edges = {{"conv1", "bn1"}, {"bn1", "conv2"}};
  return m;
}

TensorArchive toy_archive() {
  auto a = testkit::random_archive(toy(), 99);
  // Non-trivial BN statistics so resets are observable.
  for (auto role : {"weight", "bias", "running_mean", "running_var"}) {
    auto& t = a.tensors.at(tensor_key("bn1", role));
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = 0.5f + 0.1f * static_cast<float>(i);
  }
  return a;
}

std::vector<std::int64_t> shape_of(const TensorArchive& a, const std::string& layer) {
  return a.tensor(layer, "weight").shape;
}

}  // namespace

TEST_CASE("identity plan") {
  const auto m = arch("resnet56");
  const auto plan = build_plan(m, 1.0);
  for (const auto& l : m.layers) {
    if (!l.has_weights()) continue;
    CHECK(plan.rates.at(l.name) == 1.0);
    CHECK(plan.sketch_sizes.at(l.name) == l.out_channels);
  }
}

TEST_CASE("resnet56 at 0.6") {
  const auto m = arch("resnet56");
  const auto plan = build_plan(m, 0.6);
  const auto widths = planned_widths(m, plan);
  std::map<std::string, int> group_width;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    if (l.has_weights()) {
      CHECK(plan.rates.at(l.name) == (l.prunable ? 0.6 : 1.0));
      CHECK(plan.sketch_sizes.at(l.name) == sketch_size(plan.rates.at(l.name), l.out_channels));
    }
    if (!l.prune_group.empty()) {
      auto [it, fresh] = group_width.emplace(l.prune_group, widths[i]);
      CHECK(it->second == widths[i]);
    }
  }
  CHECK(plan.sketch_sizes.at("layer1.0.conv1") == 10);
}

TEST_CASE("single override") {
  const auto m = toy();
  const auto plan = build_plan(m, 1.0, {.overrides = {{"conv1", 0.5}}});
  CHECK(plan.rates.at("conv1") == 0.5);
  CHECK(plan.rates.at("conv2") == 1.0);
  CHECK(plan.sketch_sizes.at("conv1") == 4);
}

TEST_CASE("plan errors") {
  const auto m = toy();
  CHECK(code_of([&] { build_plan(m, 0.0); }) == ErrorCode::rate_out_of_range);
  CHECK(code_of([&] { build_plan(m, 1.5); }) == ErrorCode::rate_out_of_range);
  CHECK(code_of([&] { build_plan(m, 1.0, {.overrides = {{"nope", 0.5}}}); }) ==
        ErrorCode::unknown_layer);
  CHECK(code_of([&] { build_plan(m, 1.0, {.overrides = {{"conv1", 2.0}}}); }) ==
        ErrorCode::rate_out_of_range);
  CHECK(code_of([&] { build_plan(m, 1.0, {.overrides = {{"bn1", 0.5}}}); }) ==
        ErrorCode::invalid_argument);
  CHECK(code_of([&] { build_plan(m, 1.0, {.overrides = {{"conv2", 0.5}}}); }) ==
        ErrorCode::invalid_argument);
  CHECK_NOTHROW(build_plan(m, 1.0, {.overrides = {{"conv2", 0.5}}, .prune_all = true}));
}

TEST_CASE("group takes the minimum member rate") {
  auto m = toy();
  m.layers[2].prunable = true;
  m.layers[2].out_channels = 8;
  m.layers[0].prune_group = "g";
  m.layers[2].prune_group = "g";
  const auto plan = build_plan(m, 0.75, {.overrides = {{"conv2", 0.5}}});
  CHECK(plan.group_rates.at("g") == 0.5);
  CHECK(plan.sketch_sizes.at("conv1") == 4);
  CHECK(plan.sketch_sizes.at("conv2") == 4);
}

TEST_CASE("rate one is the identity") {
  const auto a = testkit::random_archive(arch("resnet56"), 8);
  const auto out = sketch_model(a, build_plan(a.manifest, 1.0));
  CHECK(out.archive.tensors == a.tensors);
  CHECK(manifest_to_json(out.archive.manifest) == manifest_to_json(a.manifest));
  CHECK(out.report.steps.empty());
  CHECK(out.report.pruning_rate_flops == 0.0);
}

TEST_CASE("toy net shapes after pruning conv1 by half") {
  const auto a = toy_archive();
  const auto plan = build_plan(a.manifest, 1.0, {.overrides = {{"conv1", 0.5}}});
  const auto out = sketch_model(a, plan);
  CHECK(shape_of(out.archive, "conv1") == std::vector<std::int64_t>{4, 3, 3, 3});
  CHECK(shape_of(out.archive, "conv2") == std::vector<std::int64_t>{4, 4, 3, 3});
  CHECK(out.archive.tensor("bn1", "weight").shape == std::vector<std::int64_t>{4});
  for (float v : out.archive.tensor("bn1", "weight").data) CHECK(v == 1.0f);
  for (float v : out.archive.tensor("bn1", "running_mean").data) CHECK(v == 0.0f);
  CHECK_NOTHROW(out.archive.validate());

  REQUIRE(out.report.steps.size() == 2);
  CHECK(out.report.steps[0].layer == "conv1");
  CHECK(out.report.steps[0].axis == "output");
  CHECK(out.report.steps[0].sketch_width == 4);
  CHECK(out.report.steps[1].layer == "conv2");
  CHECK(out.report.steps[1].axis == "input");
  CHECK(out.report.all_certificates_pass());
  CHECK(out.report.flops_after < out.report.flops_before);

  // Each rewritten weight has unit Frobenius norm.
  for (auto layer : {"conv1", "conv2"}) {
    const auto& w = out.archive.tensor(layer, "weight").data;
    double sq = 0;
    for (float v : w) sq += double{v} * v;
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("conv1 output sketch equals the normalized FD sketch") {
  const auto a = toy_archive();
  const auto out = sketch_model(a, build_plan(a.manifest, 1.0, {.overrides = {{"conv1", 0.5}}}));
  const auto w = flatten_filters(a.tensor("conv1", "weight"));
  const auto expect = frobenius_normalize(fd_sketch(w, 4));
  const auto got = flatten_filters(out.archive.tensor("conv1", "weight"));
  CHECK((got.values - expect.values.cast<float>().cast<double>()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("threads do not change results") {
  const auto a = testkit::random_archive(arch("resnet56"), 21);
  const auto plan = build_plan(a.manifest, 0.6);
  const auto one = sketch_model(a, plan, {.threads = 1});
  const auto many = sketch_model(a, plan, {.threads = 4});
  CHECK(one.archive.tensors == many.archive.tensors);
  REQUIRE(one.report.steps.size() == many.report.steps.size());
  for (std::size_t i = 0; i < one.report.steps.size(); ++i) {
    CHECK(one.report.steps[i].layer == many.report.steps[i].layer);
    CHECK(one.report.steps[i].axis == many.report.steps[i].axis);
  }
}

TEST_CASE("all-zero sketch falls back to column subsampling") {
  auto a = toy_archive();
  // Orthonormal equal-energy filters into two slots: every shrink wipes the
  // buffer, and the last one fires on the final column.
  auto& w = a.tensors.at("conv1.weight");
  std::fill(w.data.begin(), w.data.end(), 0.0f);
  for (int j = 0; j < 8; ++j) w.data[static_cast<std::size_t>(j * 27 + j)] = 1.0f;
  const auto out = sketch_model(a, build_plan(a.manifest, 1.0, {.overrides = {{"conv1", 0.25}}}));
  REQUIRE_FALSE(out.report.warnings.empty());
  CHECK(out.report.steps[0].fallback);
  CHECK_NOTHROW(out.archive.validate());
}

TEST_CASE("random subset matches the pinned draw") {
  CHECK(random_subset(8, 4, 7, 0) == std::vector<int>{1, 3, 5, 7});
  CHECK(random_subset(16, 10, 7, 3) == std::vector<int>{1, 2, 4, 5, 6, 8, 9, 10, 12, 14});
  CHECK(random_subset(5, 5, 1, 0) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(random_subset(5, 0, 1, 0).empty());
}

TEST_CASE("random subsample on the toy net") {
  const auto a = toy_archive();
  const auto plan = build_plan(a.manifest, 1.0, {.overrides = {{"conv1", 0.5}}});
  const auto out = random_subsample(a, plan, 7);
  CHECK(shape_of(out.archive, "conv1") == std::vector<std::int64_t>{4, 3, 3, 3});
  CHECK(shape_of(out.archive, "conv2") == std::vector<std::int64_t>{4, 4, 3, 3});

  const std::vector<int> keep{1, 3, 5, 7};
  const auto before = flatten_filters(a.tensor("conv1", "weight"));
  const auto after = flatten_filters(out.archive.tensor("conv1", "weight"));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    CHECK(after.values.col(static_cast<Eigen::Index>(j)) == before.values.col(keep[j]));
  }
  const auto in_before = flatten_input_channels(a.tensor("conv2", "weight"));
  const auto in_after = flatten_input_channels(out.archive.tensor("conv2", "weight"));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    CHECK(in_after.values.col(static_cast<Eigen::Index>(j)) == in_before.values.col(keep[j]));
  }
  const auto& bn_before = a.tensor("bn1", "running_var").data;
  const auto& bn_after = out.archive.tensor("bn1", "running_var").data;
  for (std::size_t j = 0; j < keep.size(); ++j) CHECK(bn_after[j] == bn_before[static_cast<std::size_t>(keep[j])]);

  const auto again = random_subsample(a, plan, 7);
  CHECK(again.archive.tensors == out.archive.tensors);
}

TEST_CASE("random subsample at rate one is the identity") {
  const auto a = testkit::random_archive(arch("resnet56"), 4);
  const auto out = random_subsample(a, build_plan(a.manifest, 1.0), 3);
  CHECK(out.archive.tensors == a.tensors);
}

TEST_CASE("random subsample keeps residual stages coherent") {
  const auto a = testkit::random_archive(arch("resnet56"), 4);
  const auto out = random_subsample(a, build_plan(a.manifest, 0.5, {.prune_all = true}), 3);
  CHECK_NOTHROW(out.archive.validate());
  CHECK(out.report.flops_after < out.report.flops_before);
}

TEST_CASE("svd_truncate on diag(3, 2, 1)") {
  Eigen::MatrixXd w = Eigen::Vector3d(3, 2, 1).asDiagonal();
  const FilterMatrix fw(w);
  CHECK(gram_difference(w, svd_truncate(fw, 3).values).frobenius < 1e-12);
  const auto one = svd_truncate(fw, 1);
  CHECK(one.cols() == 1);
  CHECK(one.values(0, 0) == doctest::Approx(3.0));
  CHECK(std::abs(one.values(1, 0)) < 1e-12);
  CHECK(gram_difference(w, one.values).lambda_max == doctest::Approx(4.0));
  CHECK(code_of([&] { svd_truncate(fw, 0); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { svd_truncate(fw, 4); }) == ErrorCode::invalid_argument);
}

TEST_CASE("svd truncation method through the planner") {
  const auto a = toy_archive();
  const auto plan = build_plan(a.manifest, 1.0, {.overrides = {{"conv1", 0.5}}});
  const auto out = sketch_model(a, plan, {.method = SketchMethod::svd_truncate});
  CHECK(out.report.method == "svdtrunc");
  CHECK(shape_of(out.archive, "conv2") == std::vector<std::int64_t>{4, 4, 3, 3});
}

TEST_CASE("resnet56 at 0.6 end to end") {
  const auto a = testkit::random_archive(arch("resnet56"), 56);
  const auto out = sketch_model(a, build_plan(a.manifest, 0.6));
  CHECK_NOTHROW(out.archive.validate());
  CHECK(out.report.all_certificates_pass());
  CHECK(out.report.warnings.empty());
  CHECK(out.report.flops_after < out.report.flops_before);
  for (const auto& s : out.report.steps) {
    REQUIRE(s.quality);
    CHECK(s.quality->psd_ordered);
  }
}

TEST_CASE("every shipped architecture prunes and re-validates") {
  for (const auto* name : {"resnet110", "googlenet"}) {
    const auto a = testkit::random_archive(arch(name), 1);
    const auto out = sketch_model(a, build_plan(a.manifest, 0.5), {.compute_quality = false});
    CAPTURE(name);
    CHECK_NOTHROW(out.archive.validate());
    CHECK(out.report.flops_after < out.report.flops_before);
  }
}
