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
#include <map>
#include <random>

#include "fogpipe/pipeline_sim.hpp"
#include "test_helpers.hpp"

using namespace fogpipe;
using fogpipe::testing::make_cluster;
using fogpipe::testing::make_device;

namespace {

/// Same chain scenario as the timing tests: stages of 0.5 s and 0.25 s with a
/// 0.1 s transfer between them.
struct ChainFixture {
  WorkloadInstance instance;
  ClusterSpec cluster;
  ExecutionOrder order{{0, 1, 2}};
  Schedule schedule;

  ChainFixture() {
    for (int i = 0; i < 3; ++i) {
      LayerNode node;
      node.layer_id = i;
      instance.graph.layers.push_back(node);
    }
    instance.graph.layers[1].output_bytes = 1'000'000;
    instance.graph.edges = {{0, 1}, {1, 2}};
    instance.profiles.set(0, 0, 0.2);
    instance.profiles.set(1, 0, 0.3);
    instance.profiles.set(2, 1, 0.25);
    cluster = make_cluster({make_device(0, 100e6), make_device(1, 100e6)});
    schedule.micro_batch = 10;
    schedule.stages = {{0, 1, 0}, {2, 2, 1}};
  }
};

WorkloadInstance random_instance(int n_layers, const std::vector<DeviceId> &devices,
                                 std::uint64_t seed) {
  CostRanges ranges;
  ranges.device_ids = devices;
  ranges.base_seconds = {0.01, 0.4};
  ranges.device_speed = {0.5, 2.0};
  ranges.output_bytes = {100e3, 10e6};
  return gen_random_dag(n_layers, 0.4, ranges, seed);
}

}  // namespace

TEST_CASE("single stage pipeline has no overlap to exploit") {
  WorkloadInstance instance;
  LayerNode node;
  node.layer_id = 0;
  instance.graph.layers.push_back(node);
  instance.profiles.set(0, 0, 0.5);
  auto cluster = make_cluster({make_device(0, 1e8)});
  Schedule schedule;
  schedule.micro_batch = 1;
  schedule.stages = {{0, 0, 0}};

  auto report = simulate(instance, ExecutionOrder{{0}}, schedule, cluster, 4,
                         std::nullopt, 0);
  CHECK(report.makespan == Catch::Approx(2.0));
  CHECK(report.steady_interval == Catch::Approx(0.5));
  CHECK(report.throughput_samples_per_s == Catch::Approx(2.0));

  CHECK_THROWS_AS(
      simulate(instance, ExecutionOrder{{0}}, schedule, cluster, 1, std::nullopt, 0),
      Error);
}

TEST_CASE("two-stage tandem matches the hand-computed timeline") {
  ChainFixture fx;
  auto report =
      simulate(fx.instance, fx.order, fx.schedule, fx.cluster, 10, std::nullopt, 0);
  CHECK(report.steady_interval == Catch::Approx(0.5).epsilon(1e-12));
  // Fill (0.5 + 0.1 + 0.25) plus nine more bottleneck cycles.
  CHECK(report.makespan == Catch::Approx(5.35).epsilon(1e-12));
  CHECK(report.throughput_samples_per_s == Catch::Approx(20.0));
}

TEST_CASE("degenerate jitter adds a constant to every transfer") {
  ChainFixture fx;
  // Make the link the bottleneck so the jitter shows up in the interval:
  // 60 MB * 10 / 100 MB/s = 6 s per transfer.
  fx.instance.graph.layers[1].output_bytes = 60'000'000;
  auto report = simulate(fx.instance, fx.order, fx.schedule, fx.cluster, 6,
                         std::make_pair(10.0, 10.0), 1, true);
  CHECK(report.steady_interval == Catch::Approx(6.0 + 0.010).epsilon(1e-12));
  for (const auto &ev : *report.trace) {
    if (ev.resource.rfind("link:", 0) == 0) {
      CHECK(ev.end - ev.start == Catch::Approx(6.010).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero-jitter simulation agrees with the analytic model") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    int n_devices = 1 + trial % 4;
    std::vector<DeviceId> devices;
    for (int d = 0; d < n_devices; ++d) devices.push_back(d);
    auto instance = random_instance(2 + trial % 8, devices,
                                    static_cast<std::uint64_t>(trial));
    auto cluster = fogpipe::testing::random_cluster(n_devices, rng);
    auto rs = fogpipe::testing::random_valid_schedule(instance, cluster, rng);
    int n = 2 + trial % 20;

    auto eval = evaluate_schedule(instance, rs.order, rs.schedule, cluster);
    auto report =
        simulate(instance, rs.order, rs.schedule, cluster, n, std::nullopt, 0);

    CHECK(report.steady_interval ==
          Catch::Approx(eval.t_overall).epsilon(1e-9));

    // The exact closed form: fill time plus (n - 1) bottleneck cycles.
    double fill = 0.0, bottleneck = 0.0;
    for (const auto &st : eval.per_stage) {
      fill += st.t_comp + st.t_comm;
      bottleneck = std::max(bottleneck, std::max(st.t_comp, st.t_comm));
    }
    CHECK(report.makespan == fill + static_cast<double>(n - 1) * bottleneck);

    // Busy time can never exceed the makespan on any resource.
    for (const auto &[name, busy] : report.per_resource_busy) {
      CHECK(busy <= report.makespan * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("jitter only slows the pipeline down") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto instance = random_instance(6, {0, 1, 2}, 900 + static_cast<std::uint64_t>(trial));
    auto cluster = fogpipe::testing::random_cluster(3, rng);
    auto rs = fogpipe::testing::random_valid_schedule(instance, cluster, rng);
    auto plain =
        simulate(instance, rs.order, rs.schedule, cluster, 12, std::nullopt, 4);
    auto jittered = simulate(instance, rs.order, rs.schedule, cluster, 12,
                             std::make_pair(10.0, 30.0), 4);
    // Every departure moves later when link services grow, so the makespan is
    // monotone. The last inter-departure gap is not: a lucky final jitter can
    // shrink it below the nominal cycle.
    CHECK(jittered.makespan >= plain.makespan);

    // Determinism under a fixed seed.
    auto rerun = simulate(instance, rs.order, rs.schedule, cluster, 12,
                          std::make_pair(10.0, 30.0), 4);
    CHECK(rerun.makespan == jittered.makespan);
    CHECK(rerun.steady_interval == jittered.steady_interval);
  }
}

TEST_CASE("FIFO order is never violated") {
  ChainFixture fx;
  auto report = simulate(fx.instance, fx.order, fx.schedule, fx.cluster, 8,
                         std::make_pair(5.0, 25.0), 9, true);
  std::map<std::string, std::pair<int, double>> last;  // resource -> batch, end
  for (const auto &ev : *report.trace) {
    auto it = last.find(ev.resource);
    if (it != last.end()) {
      CHECK(ev.batch == it->second.first + 1);
      CHECK(ev.start >= it->second.second - 1e-12);  // no overlap on a resource
    }
    last[ev.resource] = {ev.batch, ev.end};
  }
}

TEST_CASE("equal_partition_baseline sizes") {
  ExecutionOrder five{{0, 1, 2, 3, 4}};
  auto s52 = equal_partition_baseline(five, {0, 1});
  REQUIRE(s52.stages.size() == 2);
  CHECK(s52.stages[0].end_idx - s52.stages[0].start_idx + 1 == 3);
  CHECK(s52.stages[1].end_idx - s52.stages[1].start_idx + 1 == 2);

  ExecutionOrder four{{0, 1, 2, 3}};
  auto s44 = equal_partition_baseline(four, {0, 1, 2, 3});
  REQUIRE(s44.stages.size() == 4);
  for (const auto &st : s44.stages) CHECK(st.end_idx == st.start_idx);

  ExecutionOrder two{{0, 1}};
  auto s24 = equal_partition_baseline(two, {0, 1, 2, 3});
  CHECK(s24.stages.size() == 2);  // trailing devices unused
}

TEST_CASE("single_device_report") {
  WorkloadInstance instance;
  for (int i = 0; i < 2; ++i) {
    LayerNode node;
    node.layer_id = i;
    instance.graph.layers.push_back(node);
  }
  instance.graph.edges = {{0, 1}};
  instance.profiles.set(0, 0, 0.2);
  instance.profiles.set(1, 0, 0.3);
  ExecutionOrder order{{0, 1}};
  CHECK(single_device_report(instance, order, 0, 16) == Catch::Approx(32.0));

  WorkloadInstance one_layer;
  LayerNode node;
  node.layer_id = 0;
  one_layer.graph.layers.push_back(node);
  one_layer.profiles.set(0, 0, 1.0);
  CHECK(single_device_report(one_layer, ExecutionOrder{{0}}, 0, 1) ==
        Catch::Approx(1.0));

  one_layer.profiles.set(0, 0, 0.0);
  CHECK_THROWS_WITH(single_device_report(one_layer, ExecutionOrder{{0}}, 0, 1),
                    Catch::Matchers::ContainsSubstring("non-positive cycle time"));
  CHECK_THROWS_AS(single_device_report(instance, order, 9, 4), Error);
}

TEST_CASE("bench_suite shapes and dominance") {
  CostRanges ranges;
  ranges.device_ids = {0, 1};
  ranges.base_seconds = {0.02, 0.2};
  ranges.device_speed = {0.5, 2.0};
  ranges.output_bytes = {100e3, 2e6};
  auto instance = gen_multigran_dag(2, 2, 1, false, ranges, 3, "bench");
  auto cluster = make_cluster({make_device(0, 3e8), make_device(1, 1.5e8)});

  BenchConfig config;
  config.reps = 2;
  config.seed = 12;
  config.b_mu = 4;
  config.n_microbatches = 8;
  config.jitter_ms.reset();
  config.ga.population_size = 8;
  config.ga.generations = 4;

  auto rows = bench_suite({instance}, {{"c0", cluster}}, config);
  // Three modes, two reps each plus a mean row.
  CHECK(rows.size() == 3 * 3);

  std::map<std::string, double> mean_throughput;
  for (const auto &row : rows) {
    if (row.rep == "mean") mean_throughput[row.mode] = row.throughput_samples_s;
  }
  // Zero jitter: the searched schedule can never lose to the even split.
  CHECK(mean_throughput["gadphds"] >=
        mean_throughput["baseline"] * (1.0 - 1e-12));

  auto csv = bench_to_csv(rows);
  CHECK(csv.find("cluster,mode,rep,seed,steady_interval_s,makespan_s,"
                 "throughput_samples_s") == 0);
  CHECK(csv.find("c0,gadphds,mean") != std::string::npos);

  CHECK_THROWS_AS(bench_suite({instance}, {}, config), Error);
}

TEST_CASE("symmetric cluster with zero communication makes the even split optimal") {
  // Identical devices, uniform costs, zero output bytes.
  WorkloadInstance instance;
  for (int i = 0; i < 8; ++i) {
    LayerNode node;
    node.layer_id = i;
    instance.graph.layers.push_back(node);
    if (i > 0) instance.graph.edges.emplace(i - 1, i);
    instance.profiles.set(i, 0, 0.1);
    instance.profiles.set(i, 1, 0.1);
  }
  auto cluster = make_cluster({make_device(0, 1e8), make_device(1, 1e8)});
  auto order = canonical_topo_order(instance.graph);

  auto baseline = equal_partition_baseline(order, {0, 1}, 4);
  auto base_eval = evaluate_schedule(instance, order, baseline, cluster);
  auto dp = dp_partition(instance, cluster, order, {0, 1}, 4);
  CHECK(dp.t_max == Catch::Approx(base_eval.t_overall).epsilon(1e-9));
}
