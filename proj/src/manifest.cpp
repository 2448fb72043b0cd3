#include <algorithm>
#include <map>
#include <set>

#include "sketchprune/error.hpp"
#include "sketchprune/tensor.hpp"

namespace sketchprune {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::invalid_manifest, msg); }

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::fc: return "fc";
    case LayerKind::bn: return "bn";
    case LayerKind::pool: return "pool";
    case LayerKind::add: return "add";
    case LayerKind::concat: return "concat";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (auto k : {LayerKind::conv, LayerKind::fc, LayerKind::bn, LayerKind::pool, LayerKind::add,
                 LayerKind::concat}) {
    if (to_string(k) == text) return k;
  }
  bad("unknown layer kind '" + std::string(text) + "'");
}

std::optional<std::size_t> ModelManifest::find(std::string_view layer) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == layer) return i;
  }
  return std::nullopt;
}

std::size_t ModelManifest::index_of(std::string_view layer) const {
  if (auto i = find(layer)) return *i;
  throw Error(ErrorCode::unknown_layer, "no layer named '" + std::string(layer) + "'");
}

std::vector<std::size_t> ModelManifest::producers(std::size_t i) const {
  std::vector<std::size_t> out;
  for (const auto& e : edges) {
    if (e.consumer == layers[i].name) out.push_back(index_of(e.producer));
  }
  return out;
}

std::vector<std::size_t> ModelManifest::consumers(std::size_t i) const {
  std::vector<std::size_t> out;
  for (const auto& e : edges) {
    if (e.producer == layers[i].name) out.push_back(index_of(e.consumer));
  }
  return out;
}

std::vector<std::size_t> ModelManifest::topological_order() const {
  const std::size_t n = layers.size();
  std::map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(layers[i].name, i);
  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& e : edges) {
    const auto p = index.find(e.producer);
    const auto c = index.find(e.consumer);
    if (p == index.end() || c == index.end()) {
      bad("edge " + e.producer + " -> " + e.consumer + " references an unknown layer");
    }
    succ[p->second].push_back(c->second);
    ++indegree[c->second];
  }
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.insert(i);
  }
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    const auto i = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(i);
    for (auto j : succ[i]) {
      if (--indegree[j] == 0) ready.insert(j);
    }
  }
  if (order.size() != n) bad("edges contain a cycle");
  return order;
}

void ModelManifest::validate() const {
  if (num_classes < 1) bad("num_classes must be positive");
  if (input_channels < 1) bad("input_channels must be positive");
  std::set<std::string_view> names;
  std::map<std::string_view, int> group_width;
  for (const auto& l : layers) {
    if (l.name.empty()) bad("layer with empty name");
    if (!names.insert(l.name).second) bad("duplicate layer name '" + l.name + "'");
    if (l.out_channels < 1 || l.in_channels < 1) bad("layer '" + l.name + "' has non-positive channels");
    if (l.kernel_h < 1 || l.kernel_w < 1) bad("layer '" + l.name + "' has non-positive kernel");
    if (l.stride < 1 || l.padding < 0) bad("layer '" + l.name + "' has invalid stride/padding");
    if (l.prunable && !l.has_weights()) bad("layer '" + l.name + "' is prunable but has no weights");
    switch (l.kind) {
      case LayerKind::bn:
      case LayerKind::add:
      case LayerKind::concat:
        if (l.in_channels != l.out_channels) {
          throw Error(ErrorCode::shape_mismatch, "layer '" + l.name + "' must preserve width");
        }
        break;
      case LayerKind::pool:
        if (l.out_channels < l.in_channels) {
          throw Error(ErrorCode::shape_mismatch, "pool '" + l.name + "' cannot shrink channels");
        }
        break;
      case LayerKind::fc:
        if (l.kernel_h != 1 || l.kernel_w != 1) bad("fc layer '" + l.name + "' must have 1x1 kernel");
        break;
      case LayerKind::conv:
        break;
    }
    if (!l.prune_group.empty()) {
      auto [it, inserted] = group_width.emplace(l.prune_group, l.out_channels);
      if (!inserted && it->second != l.out_channels) {
        throw Error(ErrorCode::shape_mismatch,
                    "prune group '" + l.prune_group + "' members disagree on width");
      }
    }
  }
  for (const auto& e : edges) {
    if (e.producer == e.consumer) bad("self edge on '" + e.producer + "'");
  }
  topological_order();  // rejects dangling edges and cycles

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto prods = producers(i);
    if (prods.empty()) {
      if (l.in_channels != input_channels) {
        throw Error(ErrorCode::shape_mismatch,
                    "source layer '" + l.name + "' must consume the network input width");
      }
      continue;
    }
    if (l.kind == LayerKind::concat) {
      int sum = 0;
      for (auto p : prods) sum += layers[p].out_channels;
      if (sum != l.in_channels) {
        throw Error(ErrorCode::shape_mismatch,
                    "concat '" + l.name + "' width differs from the sum of its inputs");
      }
    } else {
      for (auto p : prods) {
        if (layers[p].out_channels != l.in_channels) {
          throw Error(ErrorCode::shape_mismatch, "edge " + layers[p].name + " -> " + l.name +
                                                     ": producer width " +
                                                     std::to_string(layers[p].out_channels) +
                                                     " != consumer width " +
                                                     std::to_string(l.in_channels));
        }
      }
    }
  }
}

}  // namespace sketchprune
