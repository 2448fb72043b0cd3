#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"
#include "sketchprune/analysis.hpp"
#include "sketchprune/error.hpp"
#include "sketchprune/rng.hpp"
#include "sketchprune/testkit.hpp"

namespace sketchprune::testkit {

FilterMatrix random_matrix(std::uint64_t seed, int d, int c) {
  CounterRng rng(seed);
  FilterMatrix m(d, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < d; ++i) m.values(i, j) = static_cast<float>(rng.normal());
  }
  return m;
}

std::string checksum(const FilterMatrix& m) {
  static_assert(std::endian::native == std::endian::little);
  const auto* bytes = reinterpret_cast<const unsigned char*>(m.values.data());
  const auto len = static_cast<std::size_t>(m.values.size()) * sizeof(double);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (EVP_Digest(bytes, len, digest, &digest_len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::io_error, "SHA-256 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < digest_len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

GoldenCase generate_case(std::uint64_t seed, int d, int c, int ell) {
  if (d < 1 || c < 1 || ell < 1) throw Error(ErrorCode::invalid_argument, "case dimensions must be positive");
  const auto w = random_matrix(seed, d, c);
  const auto omega = reference_fd(w, ell);
  GoldenCase g;
  g.seed = seed;
  g.d = d;
  g.c = c;
  g.ell = ell;
  g.input_checksum = checksum(w);
  g.omega_checksum = checksum(omega);
  g.gram_err_spec = gram_difference(w.values, omega.values).lambda_max;
  return g;
}

TensorArchive case_archive(const FilterMatrix& w) {
  TensorArchive a;
  a.manifest.name = "golden_case";
  a.manifest.input_channels = static_cast<int>(w.rows());
  a.manifest.input_spatial = {1, 1};
  a.manifest.num_classes = 1;
  LayerSpec l;
  l.name = "w";
  l.kind = LayerKind::conv;
  l.in_channels = static_cast<int>(w.rows());
  l.out_channels = static_cast<int>(w.cols());
  l.prunable = true;
  a.manifest.layers.push_back(l);
  auto t = unflatten_filters(w, l.in_channels, 1, 1, tensor_key(l.name, "weight"));
  a.tensors.emplace(t.name, std::move(t));
  return a;
}

std::vector<SweepShape> sweep_shapes(std::uint64_t master_seed, int count) {
  CounterRng rng(master_seed);
  std::vector<SweepShape> shapes;
  for (int i = 0; i < count; ++i) {
    SweepShape s;
    s.seed = master_seed * 1000 + static_cast<std::uint64_t>(i);
    s.d = 8 + static_cast<int>(rng.below(512 - 8 + 1));
    s.c = 4 + static_cast<int>(rng.below(256 - 4 + 1));
    s.ell = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(s.c - 2 + 1)));
    shapes.push_back(s);
  }
  return shapes;
}

void save_golden(const std::vector<GoldenCase>& cases, const std::filesystem::path& file) {
  nlohmann::ordered_json j;
  j["format"] = "sketchprune-golden-v1";
  j["generator"] = "CounterRng standard normals rounded to float32, column-major";
  j["checksum"] = "sha256 over float64 little-endian column-major bytes";
  j["cases"] = nlohmann::ordered_json::array();
  for (const auto& g : cases) {
    j["cases"].push_back({{"seed", g.seed},
                          {"d", g.d},
                          {"c", g.c},
                          {"ell", g.ell},
                          {"input_checksum", g.input_checksum},
                          {"omega_checksum", g.omega_checksum},
                          {"gram_err_spec", g.gram_err_spec}});
  }
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::io_error, "cannot write '" + file.string() + "'");
  out << j.dump(1) << '\n';
}

std::vector<GoldenCase> load_golden(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open '" + file.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    std::vector<GoldenCase> cases;
    for (const auto& cj : j.at("cases")) {
      GoldenCase g;
      g.seed = cj.at("seed").get<std::uint64_t>();
      g.d = cj.at("d").get<int>();
      g.c = cj.at("c").get<int>();
      g.ell = cj.at("ell").get<int>();
      g.input_checksum = cj.at("input_checksum").get<std::string>();
      g.omega_checksum = cj.at("omega_checksum").get<std::string>();
      g.gram_err_spec = cj.at("gram_err_spec").get<double>();
      cases.push_back(std::move(g));
    }
    return cases;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_manifest, file.string() + ": " + e.what());
  }
}

}  // namespace sketchprune::testkit
