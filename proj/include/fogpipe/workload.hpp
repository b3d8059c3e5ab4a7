/**
 * Copyright 2026 The fogpipe Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef FOGPIPE_WORKLOAD_HPP_
#define FOGPIPE_WORKLOAD_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fogpipe/common.hpp"
#include "json.hpp"

namespace fogpipe {

using LayerId = int;
using DeviceId = int;

/// One profiled inference layer: memory footprint plus input/output tensor
/// sizes in bytes. Per-device compute times live in ProfileMatrix.
struct LayerNode {
  LayerId layer_id = 0;
  std::string name;
  std::int64_t mem_bytes = 0;
  std::int64_t input_bytes = 0;
  std::int64_t output_bytes = 0;
};

/// Layer DAG: nodes plus (pred, succ) dependency edges.
struct ModelGraph {
  std::vector<LayerNode> layers;
  std::set<std::pair<LayerId, LayerId>> edges;

  std::size_t n_layers() const { return layers.size(); }

  bool has_layer(LayerId id) const {
    for (const auto &l : layers) {
      if (l.layer_id == id) return true;
    }
    return false;
  }

  const LayerNode &layer(LayerId id) const {
    for (const auto &l : layers) {
      if (l.layer_id == id) return l;
    }
    throw Error("unknown layer id " + std::to_string(id));
  }

  /// Successor adjacency keyed by layer id.
  std::map<LayerId, std::vector<LayerId>> adjacency() const {
    std::map<LayerId, std::vector<LayerId>> adj;
    for (const auto &l : layers) adj[l.layer_id];
    for (const auto &[u, v] : edges) adj[u].push_back(v);
    return adj;
  }
};

/// Measured (or synthetic) per-layer, per-device processing times in seconds.
class ProfileMatrix {
 public:
  void set(LayerId layer, DeviceId device, double seconds) {
    entries_[key(layer, device)] = seconds;
  }

  bool has(LayerId layer, DeviceId device) const {
    return entries_.count(key(layer, device)) != 0;
  }

  double at(LayerId layer, DeviceId device) const {
    auto it = entries_.find(key(layer, device));
    if (it == entries_.end()) {
      throw Error("missing profile entry for layer " + std::to_string(layer) +
                  " on device " + std::to_string(device));
    }
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }

  /// Entries sorted by (layer, device); used for deterministic serialization.
  std::vector<std::tuple<LayerId, DeviceId, double>> sorted_entries() const {
    std::vector<std::tuple<LayerId, DeviceId, double>> out;
    out.reserve(entries_.size());
    for (const auto &[k, v] : entries_) {
      out.emplace_back(static_cast<LayerId>(k >> 32),
                       static_cast<DeviceId>(k & 0xffffffffULL), v);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static std::uint64_t key(LayerId layer, DeviceId device) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(layer)) << 32) |
           static_cast<std::uint32_t>(device);
  }
  std::unordered_map<std::uint64_t, double> entries_;
};

struct WorkloadInstance {
  ModelGraph graph;
  ProfileMatrix profiles;
  std::string cluster_ref;
};

/// A topological layer permutation. Stage cuts are taken along this order.
struct ExecutionOrder {
  std::vector<LayerId> ids;

  bool operator==(const ExecutionOrder &other) const { return ids == other.ids; }
  bool operator<(const ExecutionOrder &other) const { return ids < other.ids; }
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> violations;
};

namespace detail {

inline std::string id_set_to_string(const std::vector<LayerId> &ids) {
  std::ostringstream oss;
  oss << "{";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) oss << ", ";
    oss << ids[i];
  }
  oss << "}";
  return oss.str();
}

}  // namespace detail

/// Checks every ModelGraph invariant. Violations are data, not faults: the
/// report names the failing invariant and the offending ids.
inline ValidationReport validate_graph(const ModelGraph &graph) {
  ValidationReport report;
  auto violate = [&](const std::string &msg) {
    report.ok = false;
    report.violations.push_back(msg);
  };

  std::set<LayerId> ids;
  for (const auto &l : graph.layers) {
    if (!ids.insert(l.layer_id).second) {
      violate("duplicate layer_id " + std::to_string(l.layer_id));
    }
    if (l.mem_bytes < 0 || l.input_bytes < 0 || l.output_bytes < 0) {
      violate("negative byte field on layer " + std::to_string(l.layer_id));
    }
  }
  if (graph.layers.empty()) {
    violate("graph has no layers");
    return report;
  }

  bool endpoints_ok = true;
  for (const auto &[u, v] : graph.edges) {
    if (u == v) {
      violate("self-edge on layer " + std::to_string(u));
      endpoints_ok = false;
      continue;
    }
    if (!ids.count(u)) {
      violate("dangling endpoint " + std::to_string(u));
      endpoints_ok = false;
    }
    if (!ids.count(v)) {
      violate("dangling endpoint " + std::to_string(v));
      endpoints_ok = false;
    }
  }
  if (!endpoints_ok) return report;

  // Kahn peel; whatever survives sits on a cycle.
  std::map<LayerId, int> indeg;
  std::map<LayerId, int> outdeg;
  for (LayerId id : ids) indeg[id] = outdeg[id] = 0;
  for (const auto &[u, v] : graph.edges) {
    ++indeg[v];
    ++outdeg[u];
  }
  bool has_source = false, has_sink = false;
  for (LayerId id : ids) {
    if (indeg[id] == 0) has_source = true;
    if (outdeg[id] == 0) has_sink = true;
  }
  if (!has_source) violate("no source node");
  if (!has_sink) violate("no sink node");

  auto adj = graph.adjacency();
  std::map<LayerId, int> deg = indeg;
  std::queue<LayerId> ready;
  for (LayerId id : ids) {
    if (deg[id] == 0) ready.push(id);
  }
  std::size_t emitted = 0;
  while (!ready.empty()) {
    LayerId u = ready.front();
    ready.pop();
    ++emitted;
    for (LayerId v : adj[u]) {
      if (--deg[v] == 0) ready.push(v);
    }
  }
  if (emitted != ids.size()) {
    std::vector<LayerId> cyclic;
    for (LayerId id : ids) {
      if (deg[id] > 0) cyclic.push_back(id);
    }
    violate("cycle: layers " + detail::id_set_to_string(cyclic));
  }
  return report;
}

/// Deterministic seed order for the search: Kahn's algorithm, always emitting
/// the smallest ready layer_id.
inline ExecutionOrder canonical_topo_order(const ModelGraph &graph) {
  auto adj = graph.adjacency();
  std::map<LayerId, int> indeg;
  for (const auto &l : graph.layers) indeg[l.layer_id] = 0;
  for (const auto &[u, v] : graph.edges) ++indeg[v];

  std::priority_queue<LayerId, std::vector<LayerId>, std::greater<>> ready;
  for (const auto &[id, d] : indeg) {
    if (d == 0) ready.push(id);
  }
  ExecutionOrder order;
  order.ids.reserve(graph.n_layers());
  while (!ready.empty()) {
    LayerId u = ready.top();
    ready.pop();
    order.ids.push_back(u);
    for (LayerId v : adj[u]) {
      if (--indeg[v] == 0) ready.push(v);
    }
  }
  if (order.ids.size() != graph.n_layers()) throw Error("not a DAG");
  return order;
}

/// Uniformly random ready-node choice at each Kahn step.
inline ExecutionOrder random_topo_order(const ModelGraph &graph,
                                        std::mt19937_64 &rng) {
  auto adj = graph.adjacency();
  std::map<LayerId, int> indeg;
  for (const auto &l : graph.layers) indeg[l.layer_id] = 0;
  for (const auto &[u, v] : graph.edges) ++indeg[v];

  std::vector<LayerId> ready;
  for (const auto &[id, d] : indeg) {
    if (d == 0) ready.push_back(id);
  }
  ExecutionOrder order;
  order.ids.reserve(graph.n_layers());
  while (!ready.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, ready.size() - 1);
    std::size_t at = pick(rng);
    LayerId u = ready[at];
    ready.erase(ready.begin() + static_cast<std::ptrdiff_t>(at));
    order.ids.push_back(u);
    for (LayerId v : adj[u]) {
      if (--indeg[v] == 0) ready.push_back(v);
    }
  }
  if (order.ids.size() != graph.n_layers()) throw Error("not a DAG");
  return order;
}

/// True iff for every edge (u, v), u precedes v in the order and the order is
/// a permutation of the graph's layers.
inline bool is_topological(const ModelGraph &graph, const ExecutionOrder &order) {
  if (order.ids.size() != graph.n_layers()) return false;
  std::map<LayerId, std::size_t> pos;
  for (std::size_t i = 0; i < order.ids.size(); ++i) {
    if (!pos.emplace(order.ids[i], i).second) return false;
  }
  for (const auto &l : graph.layers) {
    if (!pos.count(l.layer_id)) return false;
  }
  for (const auto &[u, v] : graph.edges) {
    if (pos.at(u) >= pos.at(v)) return false;
  }
  return true;
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Sampling bounds for synthetic instances. Per-layer base costs are scaled
/// by a per-device speed factor so device heterogeneity is consistent across
/// layers.
struct CostRanges {
  Range base_seconds{0.005, 0.05};
  Range device_speed{0.5, 2.0};
  Range output_bytes{250e3, 4e6};
  Range input_bytes{250e3, 4e6};
  Range mem_bytes{1e6, 50e6};
  std::vector<DeviceId> device_ids{0};
};

namespace detail {

inline double sample(std::mt19937_64 &rng, const Range &r) {
  if (r.hi <= r.lo) return r.lo;
  std::uniform_real_distribution<double> dist(r.lo, r.hi);
  return dist(rng);
}

/// Samples byte/memory/cost attributes in node-id order, then device speed
/// factors, then fills the profile matrix. One fixed draw order keeps
/// generation bitwise reproducible.
inline void fill_costs(WorkloadInstance &inst, const CostRanges &ranges,
                       std::mt19937_64 &rng) {
  std::vector<double> base;
  base.reserve(inst.graph.layers.size());
  for (auto &l : inst.graph.layers) {
    l.mem_bytes = static_cast<std::int64_t>(sample(rng, ranges.mem_bytes));
    l.input_bytes = static_cast<std::int64_t>(sample(rng, ranges.input_bytes));
    l.output_bytes = static_cast<std::int64_t>(sample(rng, ranges.output_bytes));
    base.push_back(sample(rng, ranges.base_seconds));
  }
  for (DeviceId d : ranges.device_ids) {
    double speed = sample(rng, ranges.device_speed);
    for (std::size_t i = 0; i < inst.graph.layers.size(); ++i) {
      inst.profiles.set(inst.graph.layers[i].layer_id, d, base[i] * speed);
    }
  }
}

}  // namespace detail

/// Synthetic layer DAG shaped like a multi-branch spatiotemporal GCN: a single
/// source fans out to `n_temporal_branches` branches; each branch holds
/// `n_spatial_levels` parallel chains of `n_st_blocks` feature blocks feeding
/// one fusion node; all fusion outputs feed one forecasting-head sink. With
/// expand_st each block becomes a temporal-conv -> graph-conv ->
/// temporal-attention chain.
inline WorkloadInstance gen_multigran_dag(int n_temporal_branches,
                                          int n_spatial_levels, int n_st_blocks,
                                          bool expand_st,
                                          const CostRanges &cost_ranges,
                                          std::uint64_t seed,
                                          const std::string &cluster_ref = "") {
  if (n_temporal_branches < 1 || n_spatial_levels < 1 || n_st_blocks < 1) {
    throw Error("multigran counts must be >= 1");
  }
  WorkloadInstance inst;
  inst.cluster_ref = cluster_ref;
  ModelGraph &g = inst.graph;

  LayerId next_id = 0;
  auto add_node = [&](const std::string &name) {
    LayerNode node;
    node.layer_id = next_id++;
    node.name = name;
    g.layers.push_back(node);
    return node.layer_id;
  };

  LayerId source = add_node("source");
  std::vector<LayerId> fusions;
  for (int b = 0; b < n_temporal_branches; ++b) {
    std::string bp = "b" + std::to_string(b);
    std::vector<LayerId> chain_tails;
    for (int c = 0; c < n_spatial_levels; ++c) {
      std::string cp = bp + ".c" + std::to_string(c);
      LayerId prev = source;
      for (int t = 0; t < n_st_blocks; ++t) {
        std::string tp = cp + ".blk" + std::to_string(t);
        if (expand_st) {
          LayerId tc = add_node(tp + ".tconv");
          LayerId gc = add_node(tp + ".gconv");
          LayerId ta = add_node(tp + ".tattn");
          g.edges.emplace(prev, tc);
          g.edges.emplace(tc, gc);
          g.edges.emplace(gc, ta);
          prev = ta;
        } else {
          LayerId blk = add_node(tp);
          g.edges.emplace(prev, blk);
          prev = blk;
        }
      }
      chain_tails.push_back(prev);
    }
    LayerId fusion = add_node(bp + ".fusion");
    for (LayerId tail : chain_tails) g.edges.emplace(tail, fusion);
    fusions.push_back(fusion);
  }
  LayerId head = add_node("head");
  for (LayerId f : fusions) g.edges.emplace(f, head);

  std::mt19937_64 rng(seed);
  detail::fill_costs(inst, cost_ranges, rng);
  return inst;
}

/// Random layered DAG: an edge (i, j) exists for i < j with probability
/// edge_density. Always valid per validate_graph.
inline WorkloadInstance gen_random_dag(int n_layers, double edge_density,
                                       const CostRanges &cost_ranges,
                                       std::uint64_t seed,
                                       const std::string &cluster_ref = "") {
  if (n_layers < 1) throw Error("n_layers must be >= 1");
  if (edge_density < 0.0 || edge_density > 1.0) {
    throw Error("edge_density must be in [0, 1]");
  }
  WorkloadInstance inst;
  inst.cluster_ref = cluster_ref;
  ModelGraph &g = inst.graph;
  for (int i = 0; i < n_layers; ++i) {
    LayerNode node;
    node.layer_id = i;
    node.name = "n" + std::to_string(i);
    g.layers.push_back(node);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int i = 0; i < n_layers; ++i) {
    for (int j = i + 1; j < n_layers; ++j) {
      if (edge_density >= 1.0 || coin(rng) < edge_density) g.edges.emplace(i, j);
    }
  }
  detail::fill_costs(inst, cost_ranges, rng);
  return inst;
}

// ---------------------------------------------------------------------------
// Workload file format
// ---------------------------------------------------------------------------

inline nlohmann::json workload_to_json(const WorkloadInstance &inst) {
  nlohmann::json j;
  j["layers"] = nlohmann::json::array();
  for (const auto &l : inst.graph.layers) {
    j["layers"].push_back({{"id", l.layer_id},
                           {"name", l.name},
                           {"mem_bytes", l.mem_bytes},
                           {"input_bytes", l.input_bytes},
                           {"output_bytes", l.output_bytes}});
  }
  j["edges"] = nlohmann::json::array();
  for (const auto &[u, v] : inst.graph.edges) {
    j["edges"].push_back(nlohmann::json::array({u, v}));
  }
  j["profiles"] = nlohmann::json::array();
  for (const auto &[layer, device, seconds] : inst.profiles.sorted_entries()) {
    j["profiles"].push_back(
        {{"layer", layer}, {"device", device}, {"seconds", seconds}});
  }
  if (!inst.cluster_ref.empty()) j["cluster_ref"] = inst.cluster_ref;
  return j;
}

inline WorkloadInstance workload_from_json(const nlohmann::json &j) {
  WorkloadInstance inst;
  try {
    for (const auto &lj : j.at("layers")) {
      LayerNode node;
      node.layer_id = lj.at("id").get<LayerId>();
      node.name = lj.value("name", "");
      node.mem_bytes = lj.value("mem_bytes", std::int64_t{0});
      node.input_bytes = lj.value("input_bytes", std::int64_t{0});
      node.output_bytes = lj.value("output_bytes", std::int64_t{0});
      inst.graph.layers.push_back(node);
    }
    for (const auto &ej : j.at("edges")) {
      inst.graph.edges.emplace(ej.at(0).get<LayerId>(), ej.at(1).get<LayerId>());
    }
    for (const auto &pj : j.value("profiles", nlohmann::json::array())) {
      inst.profiles.set(pj.at("layer").get<LayerId>(),
                        pj.at("device").get<DeviceId>(),
                        pj.at("seconds").get<double>());
    }
    inst.cluster_ref = j.value("cluster_ref", "");
  } catch (const nlohmann::json::exception &e) {
    throw IoError(std::string("malformed workload file: ") + e.what());
  }
  auto report = validate_graph(inst.graph);
  if (!report.ok) {
    std::string msg = "invalid workload graph:";
    for (const auto &v : report.violations) msg += " " + v + ";";
    throw IoError(msg);
  }
  return inst;
}

inline WorkloadInstance load_workload(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open workload file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw IoError("cannot parse workload file " + path + ": " + e.what());
  }
  return workload_from_json(j);
}

inline void save_workload(const WorkloadInstance &inst, const std::string &path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write workload file: " + path);
  out << workload_to_json(inst).dump(2) << "\n";
}

}  // namespace fogpipe

#endif  // FOGPIPE_WORKLOAD_HPP_
