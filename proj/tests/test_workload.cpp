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
#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <map>

#include "fogpipe/workload.hpp"
#include "test_helpers.hpp"

using namespace fogpipe;

namespace {

ModelGraph make_graph(int n, const std::vector<std::pair<int, int>> &edges) {
  ModelGraph g;
  for (int i = 0; i < n; ++i) {
    LayerNode node;
    node.layer_id = i;
    node.name = "n" + std::to_string(i);
    g.layers.push_back(node);
  }
  for (auto e : edges) g.edges.insert(e);
  return g;
}

bool any_violation_contains(const ValidationReport &report,
                            const std::string &needle) {
  for (const auto &v : report.violations) {
    if (v.find(needle) != std::string::npos) return true;
  }
  return false;
}

// Closed-form node/edge counts for the branched template.
int expected_nodes(int b, int s, int t, bool expand) {
  return 2 + b * (s * t * (expand ? 3 : 1) + 1);
}
int expected_edges(int b, int s, int t, bool expand) {
  int chain_inner = expand ? 3 * t - 1 : t - 1;
  return b * s * chain_inner + 2 * b * s + b;
}

}  // namespace

TEST_CASE("validate_graph basic shapes") {
  CHECK(validate_graph(make_graph(2, {{0, 1}})).ok);

  auto cyc = validate_graph(make_graph(2, {{0, 1}, {1, 0}}));
  CHECK_FALSE(cyc.ok);
  CHECK(any_violation_contains(cyc, "cycle"));
  CHECK(any_violation_contains(cyc, "{0, 1}"));

  auto dangling = validate_graph(make_graph(2, {{0, 7}}));
  CHECK_FALSE(dangling.ok);
  CHECK(any_violation_contains(dangling, "dangling endpoint 7"));

  auto self_edge = validate_graph(make_graph(2, {{1, 1}}));
  CHECK_FALSE(self_edge.ok);
  CHECK(any_violation_contains(self_edge, "self-edge"));

  ModelGraph dup = make_graph(1, {});
  dup.layers.push_back(dup.layers[0]);
  CHECK(any_violation_contains(validate_graph(dup), "duplicate"));

  ModelGraph neg = make_graph(1, {});
  neg.layers[0].mem_bytes = -1;
  CHECK_FALSE(validate_graph(neg).ok);
}

TEST_CASE("canonical_topo_order is deterministic min-id Kahn") {
  CHECK(canonical_topo_order(make_graph(3, {{0, 1}, {1, 2}})).ids ==
        std::vector<LayerId>{0, 1, 2});
  CHECK(canonical_topo_order(make_graph(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}})).ids ==
        std::vector<LayerId>{0, 1, 2, 3});
  CHECK(canonical_topo_order(make_graph(3, {})).ids ==
        std::vector<LayerId>{0, 1, 2});
  CHECK_THROWS_AS(canonical_topo_order(make_graph(2, {{0, 1}, {1, 0}})), Error);
}

TEST_CASE("multigran template matches frozen counts") {
  CostRanges ranges;
  ranges.device_ids = {0, 1};

  auto inst = gen_multigran_dag(3, 3, 2, false, ranges, 1);
  CHECK(inst.graph.n_layers() == 23);
  CHECK(validate_graph(inst.graph).ok);

  CHECK(gen_multigran_dag(1, 1, 1, false, ranges, 1).graph.n_layers() == 4);
  CHECK(gen_multigran_dag(1, 1, 1, true, ranges, 1).graph.n_layers() == 6);
  CHECK_THROWS_AS(gen_multigran_dag(0, 1, 1, false, ranges, 1), Error);
}

TEST_CASE("multigran counts match the closed forms over [1,4]^3") {
  CostRanges ranges;
  ranges.device_ids = {0};
  for (int b = 1; b <= 4; ++b) {
    for (int s = 1; s <= 4; ++s) {
      for (int t = 1; t <= 4; ++t) {
        for (bool expand : {false, true}) {
          auto inst = gen_multigran_dag(b, s, t, expand, ranges,
                                        static_cast<std::uint64_t>(b * 100 + s * 10 + t));
          INFO("b=" << b << " s=" << s << " t=" << t << " expand=" << expand);
          CHECK(static_cast<int>(inst.graph.n_layers()) ==
                expected_nodes(b, s, t, expand));
          CHECK(static_cast<int>(inst.graph.edges.size()) ==
                expected_edges(b, s, t, expand));
          CHECK(validate_graph(inst.graph).ok);
        }
      }
    }
  }
}

TEST_CASE("random dag generator") {
  CostRanges ranges;
  ranges.device_ids = {0, 1, 2};

  auto single = gen_random_dag(1, 0.0, ranges, 5);
  CHECK(single.graph.n_layers() == 1);
  CHECK(single.graph.edges.empty());

  auto full = gen_random_dag(5, 1.0, ranges, 5);
  CHECK(full.graph.edges.size() == 10);  // every forward pair

  auto a = gen_random_dag(8, 0.3, ranges, 42);
  auto b2 = gen_random_dag(8, 0.3, ranges, 42);
  CHECK(workload_to_json(a).dump() == workload_to_json(b2).dump());

  CHECK_THROWS_AS(gen_random_dag(3, 1.5, ranges, 0), Error);
}

TEST_CASE("generated instances are always valid and orderable") {
  CostRanges ranges;
  ranges.device_ids = {0, 1};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto inst = gen_random_dag(1 + static_cast<int>(seed % 10), 0.4, ranges, seed);
    REQUIRE(validate_graph(inst.graph).ok);
    auto order = canonical_topo_order(inst.graph);
    CHECK(is_topological(inst.graph, order));
    // Full profile coverage for every (layer, device) pair.
    for (const auto &l : inst.graph.layers) {
      for (DeviceId d : ranges.device_ids) {
        CHECK(inst.profiles.has(l.layer_id, d));
        CHECK(inst.profiles.at(l.layer_id, d) >= 0.0);
      }
    }
  }
}

TEST_CASE("random topological orders satisfy edge precedence") {
  CostRanges ranges;
  ranges.device_ids = {0};
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    auto inst = gen_random_dag(12, 0.35, ranges, static_cast<std::uint64_t>(trial));
    auto order = random_topo_order(inst.graph, rng);
    CHECK(is_topological(inst.graph, order));
  }
}

TEST_CASE("workload file round-trip") {
  CostRanges ranges;
  ranges.device_ids = {0, 1};
  auto inst = gen_multigran_dag(2, 2, 2, true, ranges, 11, "clusterX");

  std::string path = "test_workload_roundtrip.json";
  save_workload(inst, path);
  auto loaded = load_workload(path);
  CHECK(workload_to_json(loaded).dump() == workload_to_json(inst).dump());
  CHECK(loaded.cluster_ref == "clusterX");
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_workload("does_not_exist.json"), IoError);
}
