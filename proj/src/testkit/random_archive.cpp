#include <cmath>

#include "sketchprune/rng.hpp"
#include "sketchprune/testkit.hpp"

namespace sketchprune::testkit {

TensorArchive random_archive(const ModelManifest& manifest, std::uint64_t seed) {
  manifest.validate();
  TensorArchive a;
  a.manifest = manifest;
  CounterRng rng(seed);
  for (const auto& l : manifest.layers) {
    for (const auto& want : expected_tensors(l)) {
      WeightTensor t;
      t.name = tensor_key(l.name, want.role);
      t.shape = want.shape;
      t.data.resize(static_cast<std::size_t>(t.numel()));
      if (want.role == "weight" && l.has_weights()) {
        const double scale = std::sqrt(2.0 / static_cast<double>(l.filter_rows()));
        for (auto& v : t.data) v = static_cast<float>(scale * rng.normal());
      } else if (want.role == "weight" || want.role == "running_var") {
        std::fill(t.data.begin(), t.data.end(), 1.0f);
      }
      a.tensors.emplace(t.name, std::move(t));
    }
  }
  return a;
}

}  // namespace sketchprune::testkit
