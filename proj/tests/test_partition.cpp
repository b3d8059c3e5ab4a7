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
#include <random>

#include "fogpipe/partition_dp.hpp"
#include "fogpipe/pipeline_sim.hpp"
#include "test_helpers.hpp"

using namespace fogpipe;
using fogpipe::testing::make_cluster;
using fogpipe::testing::make_device;

namespace {

/// Two layers, two devices: splitting beats keeping everything on the first
/// device (5.0 s) as long as the 0.5 s cut transfer stays sub-dominant.
struct TwoLayerFixture {
  WorkloadInstance instance;
  ClusterSpec cluster;
  ExecutionOrder order{{0, 1}};

  TwoLayerFixture() {
    for (int i = 0; i < 2; ++i) {
      LayerNode node;
      node.layer_id = i;
      instance.graph.layers.push_back(node);
    }
    instance.graph.layers[0].output_bytes = 50'000'000;  // 0.5 s at 100 MB/s
    instance.graph.edges = {{0, 1}};
    instance.profiles.set(0, 0, 1.0);
    instance.profiles.set(1, 0, 4.0);
    instance.profiles.set(0, 1, 2.0);
    instance.profiles.set(1, 1, 2.0);
    cluster = make_cluster({make_device(0, 100e6), make_device(1, 100e6)});
  }
};

WorkloadInstance random_instance(int n_layers, const std::vector<DeviceId> &devices,
                                 std::uint64_t seed) {
  CostRanges ranges;
  ranges.device_ids = devices;
  ranges.base_seconds = {0.01, 0.5};
  ranges.device_speed = {0.4, 2.5};
  ranges.output_bytes = {100e3, 20e6};
  return gen_random_dag(n_layers, 0.4, ranges, seed);
}

}  // namespace

TEST_CASE("dp_partition splits the two-layer chain optimally") {
  TwoLayerFixture fx;
  auto result = dp_partition(fx.instance, fx.cluster, fx.order, {0, 1}, 1);
  CHECK(result.t_max == Catch::Approx(2.0));
  REQUIRE(result.schedule.stages.size() == 2);
  CHECK(result.schedule.stages[0].device_id == 0);
  CHECK(result.schedule.stages[0].end_idx == 0);
  CHECK(result.schedule.stages[1].device_id == 1);

  // Reversed device order: the best split costs 4.0.
  auto reversed = dp_partition(fx.instance, fx.cluster, fx.order, {1, 0}, 1);
  CHECK(reversed.t_max == Catch::Approx(4.0));
}

TEST_CASE("dp_partition trivial cases") {
  WorkloadInstance instance;
  LayerNode node;
  node.layer_id = 0;
  instance.graph.layers.push_back(node);
  instance.profiles.set(0, 0, 0.7);
  auto cluster = make_cluster({make_device(0, 1e8)});

  ExecutionOrder order{{0}};
  auto result = dp_partition(instance, cluster, order, {0}, 1);
  CHECK(result.t_max == 0.7);
  CHECK(result.schedule.stages.size() == 1);

  CHECK_THROWS_AS(dp_partition(instance, cluster, ExecutionOrder{}, {0}, 1), Error);
  CHECK_THROWS_AS(dp_partition(instance, cluster, order, {}, 1), Error);
}

TEST_CASE("dominant communication collapses the pipeline to one device") {
  TwoLayerFixture fx;
  // Any cut now costs 500 s to cross; total compute on the first device is 5 s.
  auto tiny = scale_bandwidth(fx.cluster, 0.001);
  auto result = dp_partition(fx.instance, tiny, fx.order, {0, 1}, 1);
  CHECK(result.schedule.stages.size() == 1);
  CHECK(result.schedule.stages[0].device_id == 0);
  CHECK(result.t_max == Catch::Approx(5.0));

  auto oracle = brute_force_partition(fx.instance, tiny, fx.order, {0, 1}, 1);
  CHECK(oracle.t_max == Catch::Approx(result.t_max));
}

TEST_CASE("brute force agrees on the two-layer instance and guards size") {
  TwoLayerFixture fx;
  auto oracle = brute_force_partition(fx.instance, fx.cluster, fx.order, {0, 1}, 1);
  CHECK(oracle.t_max == Catch::Approx(2.0));

  auto big = random_instance(13, {0}, 1);
  auto cluster = make_cluster({make_device(0, 1e8)});
  CHECK_THROWS_AS(brute_force_partition(big, cluster,
                                        canonical_topo_order(big.graph), {0}, 1),
                  Error);
}

TEST_CASE("dp matches the exhaustive oracle on seeded instances") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    int n_layers = 1 + trial % 8;
    int n_devices = 1 + trial % 3;
    std::vector<DeviceId> devices;
    for (int d = 0; d < n_devices; ++d) devices.push_back(d);
    auto instance = random_instance(n_layers, devices,
                                    static_cast<std::uint64_t>(trial) + 100);
    auto cluster = fogpipe::testing::random_cluster(n_devices, rng);
    auto order = canonical_topo_order(instance.graph);
    int b_mu = 1 + trial % 16;

    auto dp = dp_partition(instance, cluster, order, devices, b_mu);
    auto oracle = brute_force_partition(instance, cluster, order, devices, b_mu);
    INFO("trial=" << trial);
    CHECK(dp.t_max == Catch::Approx(oracle.t_max).epsilon(1e-12));
  }
}

TEST_CASE("backtracked schedules re-evaluate to the returned t_max") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    int n_devices = 1 + trial % 4;
    std::vector<DeviceId> devices;
    for (int d = 0; d < n_devices; ++d) devices.push_back(d);
    auto instance =
        random_instance(2 + trial % 10, devices, static_cast<std::uint64_t>(trial));
    auto cluster = fogpipe::testing::random_cluster(n_devices, rng);
    auto order = canonical_topo_order(instance.graph);
    auto dp = dp_partition(instance, cluster, order, devices, 8);
    auto eval = evaluate_schedule(instance, order, dp.schedule, cluster);
    CHECK(eval.t_overall == dp.t_max);
  }
}

TEST_CASE("allowing more devices never hurts") {
  std::mt19937_64 rng(5);
  std::vector<DeviceId> devices{0, 1, 2, 3};
  auto instance = random_instance(10, devices, 77);
  auto cluster = fogpipe::testing::random_cluster(4, rng);
  auto order = canonical_topo_order(instance.graph);

  double prev = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= 4; ++m) {
    std::vector<DeviceId> prefix(devices.begin(), devices.begin() + m);
    auto result = dp_partition(instance, cluster, order, prefix, 4);
    CHECK(result.t_max <= prev + 1e-15);
    prev = result.t_max;
  }
}

TEST_CASE("dp dominates the equal-partition baseline") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    int n_devices = 1 + trial % 4;
    std::vector<DeviceId> devices;
    for (int d = 0; d < n_devices; ++d) devices.push_back(d);
    auto instance =
        random_instance(3 + trial % 10, devices, 500 + static_cast<std::uint64_t>(trial));
    auto cluster = fogpipe::testing::random_cluster(n_devices, rng);
    auto order = canonical_topo_order(instance.graph);

    auto dp = dp_partition(instance, cluster, order, devices, 8);
    auto baseline = equal_partition_baseline(order, devices, 8);
    auto base_eval = evaluate_schedule(instance, order, baseline, cluster);
    CHECK(dp.t_max <= base_eval.t_overall * (1.0 + 1e-12));
  }
}

TEST_CASE("memory pruning forbids oversized stages") {
  TwoLayerFixture fx;
  fx.instance.graph.layers[0].mem_bytes = 10'000'000'000;  // 10 GB
  fx.instance.graph.layers[1].mem_bytes = 10'000'000'000;
  // Each device can hold one layer but not both.
  for (auto &d : fx.cluster.devices) d.mem_capacity_bytes = 12'000'000'000;

  auto result = dp_partition(fx.instance, fx.cluster, fx.order, {0, 1}, 1);
  CHECK(result.schedule.stages.size() == 2);

  // A single device cannot fit the model at all.
  CHECK_THROWS_AS(dp_partition(fx.instance, fx.cluster, fx.order, {0}, 1),
                  InfeasibleError);

  DpOptions no_pruning;
  no_pruning.memory_pruning = false;
  auto unpruned = dp_partition(fx.instance, fx.cluster, fx.order, {0}, 1, no_pruning);
  CHECK(unpruned.schedule.stages.size() == 1);
}

TEST_CASE("best_over_device_orders scans permutations") {
  TwoLayerFixture fx;
  auto best = best_over_device_orders(fx.instance, fx.cluster, fx.order, 1);
  CHECK(best.device_sequence == std::vector<DeviceId>{0, 1});
  CHECK(best.t_max == Catch::Approx(2.0));

  // Single device: the identity sequence.
  auto solo_cluster = make_cluster({make_device(0, 1e8)});
  WorkloadInstance solo;
  LayerNode node;
  node.layer_id = 0;
  solo.graph.layers.push_back(node);
  solo.profiles.set(0, 0, 0.3);
  auto r = best_over_device_orders(solo, solo_cluster, ExecutionOrder{{0}}, 1);
  CHECK(r.device_sequence == std::vector<DeviceId>{0});

  // Symmetric devices: every permutation costs the same.
  WorkloadInstance sym = fx.instance;
  sym.profiles.set(0, 1, 1.0);
  sym.profiles.set(1, 1, 4.0);
  sym.profiles.set(0, 0, 1.0);
  sym.profiles.set(1, 0, 4.0);
  auto fwd = dp_partition(sym, fx.cluster, fx.order, {0, 1}, 1);
  auto rev = dp_partition(sym, fx.cluster, fx.order, {1, 0}, 1);
  CHECK(fwd.t_max == Catch::Approx(rev.t_max));
  auto sym_best = best_over_device_orders(sym, fx.cluster, fx.order, 1);
  CHECK(sym_best.device_sequence == std::vector<DeviceId>{0, 1});  // lex tie-break
}

TEST_CASE("schedule file round-trip") {
  TwoLayerFixture fx;
  auto result = dp_partition(fx.instance, fx.cluster, fx.order, {0, 1}, 4);
  std::string path = "test_schedule_roundtrip.json";
  save_schedule(fx.order, result.schedule, result.t_max, path);
  auto loaded = load_schedule(path);
  CHECK(loaded.order.ids == fx.order.ids);
  CHECK(loaded.schedule.micro_batch == 4);
  CHECK(loaded.t_max_s == result.t_max);
  REQUIRE(loaded.schedule.stages.size() == result.schedule.stages.size());
  for (std::size_t i = 0; i < loaded.schedule.stages.size(); ++i) {
    CHECK(loaded.schedule.stages[i].start_idx == result.schedule.stages[i].start_idx);
    CHECK(loaded.schedule.stages[i].end_idx == result.schedule.stages[i].end_idx);
    CHECK(loaded.schedule.stages[i].device_id == result.schedule.stages[i].device_id);
  }
  std::remove(path.c_str());
}
