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
#include <random>

#include "fogpipe/timing.hpp"
#include "test_helpers.hpp"

using namespace fogpipe;
using fogpipe::testing::make_cluster;
using fogpipe::testing::make_device;

namespace {

/// Three-layer chain on two devices; the hand-computed reference scenario.
struct ChainFixture {
  WorkloadInstance instance;
  ClusterSpec cluster;
  ExecutionOrder order{{0, 1, 2}};
  Schedule schedule;

  ChainFixture() {
    for (int i = 0; i < 3; ++i) {
      LayerNode node;
      node.layer_id = i;
      node.name = "l" + std::to_string(i + 1);
      instance.graph.layers.push_back(node);
    }
    instance.graph.layers[1].output_bytes = 1'000'000;  // the cut tensor
    instance.graph.edges = {{0, 1}, {1, 2}};
    instance.profiles.set(0, 0, 0.2);
    instance.profiles.set(1, 0, 0.3);
    instance.profiles.set(2, 1, 0.25);
    cluster = make_cluster({make_device(0, 100e6), make_device(1, 100e6)});
    schedule.micro_batch = 10;
    schedule.stages = {{0, 1, 0}, {2, 2, 1}};
  }
};

}  // namespace

TEST_CASE("stage_compute_time sums per-layer profiles") {
  ProfileMatrix profiles;
  profiles.set(0, 0, 0.2);
  profiles.set(1, 0, 0.3);
  std::vector<LayerId> both{0, 1};
  CHECK(stage_compute_time(both, 0, profiles) == 0.5);
  CHECK(stage_compute_time(std::vector<LayerId>{}, 0, profiles) == 0.0);
  profiles.set(2, 0, 0.25);
  CHECK(stage_compute_time(std::vector<LayerId>{2}, 0, profiles) == 0.25);
  CHECK_THROWS_AS(stage_compute_time(std::vector<LayerId>{7}, 0, profiles), Error);
}

TEST_CASE("stage_comm_time moves the cut tensor over the capped link") {
  LayerNode cut;
  cut.output_bytes = 3'600'000;  // 3.6 MB
  auto sender = make_device(0, 200e6);
  auto receiver = make_device(1, 200e6);
  CHECK(stage_comm_time(cut, 16, sender, receiver) == Catch::Approx(0.288));

  CHECK(stage_comm_time(cut, 16, sender, sender) == 0.0);  // same device

  LayerNode empty;
  CHECK(stage_comm_time(empty, 16, sender, receiver) == 0.0);
}

TEST_CASE("load_balance_sigma is the population stddev") {
  std::vector<double> two{0.5, 0.25};
  CHECK(load_balance_sigma(two) == Catch::Approx(0.125));
  std::vector<double> equal{0.4, 0.4, 0.4};
  CHECK(load_balance_sigma(equal) == 0.0);
  std::vector<double> one{0.7};
  CHECK(load_balance_sigma(one) == 0.0);
  CHECK_THROWS_AS(load_balance_sigma(std::vector<double>{}), Error);
}

TEST_CASE("evaluate_schedule reproduces the hand-computed pipeline") {
  ChainFixture fx;
  auto eval = evaluate_schedule(fx.instance, fx.order, fx.schedule, fx.cluster);

  REQUIRE(eval.per_stage.size() == 2);
  CHECK(eval.per_stage[0].t_comp == Catch::Approx(0.5));
  CHECK(eval.per_stage[0].t_comm == 0.0);
  CHECK(eval.per_stage[1].t_comp == Catch::Approx(0.25));
  CHECK(eval.per_stage[1].t_comm == Catch::Approx(0.1));  // 1 MB * 10 / 100 MB/s
  CHECK(eval.per_stage[0].t_exec == Catch::Approx(0.5));
  CHECK(eval.per_stage[1].t_exec == Catch::Approx(0.25));
  CHECK(eval.t_overall == Catch::Approx(0.5));
  CHECK(eval.sigma == Catch::Approx(0.125));
  CHECK(eval.throughput_microbatches_per_s == Catch::Approx(2.0));
  CHECK(eval.throughput_samples_per_s == Catch::Approx(20.0));
}

TEST_CASE("single stage has no communication") {
  ChainFixture fx;
  fx.instance.profiles.set(2, 0, 0.25);
  Schedule schedule;
  schedule.micro_batch = 4;
  schedule.stages = {{0, 2, 0}};
  auto eval = evaluate_schedule(fx.instance, fx.order, schedule, fx.cluster);
  CHECK(eval.per_stage[0].t_comm == 0.0);
  CHECK(eval.t_overall == Catch::Approx(0.75));
  CHECK(eval.sigma == 0.0);
}

TEST_CASE("equal stage times give zero sigma") {
  ChainFixture fx;
  fx.instance.profiles.set(0, 0, 0.25);
  fx.instance.profiles.set(1, 0, 0.0);
  auto eval = evaluate_schedule(fx.instance, fx.order, fx.schedule, fx.cluster);
  CHECK(eval.per_stage[0].t_exec == eval.per_stage[1].t_exec);
  CHECK(eval.sigma == 0.0);
}

TEST_CASE("evaluate_schedule rejects malformed schedules") {
  ChainFixture fx;

  Schedule gap = fx.schedule;
  gap.stages[1].start_idx = 1;  // overlaps stage 0
  CHECK_THROWS_AS(evaluate_schedule(fx.instance, fx.order, gap, fx.cluster), Error);

  Schedule reuse = fx.schedule;
  reuse.stages[1].device_id = 0;
  CHECK_THROWS_AS(evaluate_schedule(fx.instance, fx.order, reuse, fx.cluster),
                  Error);

  Schedule bad_bmu = fx.schedule;
  bad_bmu.micro_batch = 0;
  CHECK_THROWS_AS(evaluate_schedule(fx.instance, fx.order, bad_bmu, fx.cluster),
                  Error);

  ExecutionOrder not_topo{{1, 0, 2}};
  CHECK_THROWS_AS(evaluate_schedule(fx.instance, not_topo, fx.schedule, fx.cluster),
                  Error);

  Schedule short_cover = fx.schedule;
  short_cover.stages.pop_back();
  CHECK_THROWS_AS(
      evaluate_schedule(fx.instance, fx.order, short_cover, fx.cluster), Error);
}

TEST_CASE("cost model invariants hold on random schedules") {
  CostRanges ranges;
  ranges.device_ids = {0, 1, 2, 3};
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    auto instance =
        gen_random_dag(2 + trial % 9, 0.4, ranges, static_cast<std::uint64_t>(trial));
    auto cluster = fogpipe::testing::random_cluster(4, rng);
    auto rs = fogpipe::testing::random_valid_schedule(instance, cluster, rng);
    auto eval = evaluate_schedule(instance, rs.order, rs.schedule, cluster);

    // Definitional re-derivation of the bottleneck.
    double worst = 0.0;
    for (const auto &st : eval.per_stage) {
      worst = std::max(worst, std::max(st.t_comp, st.t_comm));
    }
    CHECK(eval.t_overall == worst);
    CHECK(eval.sigma >= 0.0);
    CHECK(eval.throughput_samples_per_s ==
          static_cast<double>(rs.schedule.micro_batch) *
              eval.throughput_microbatches_per_s);

    // More bandwidth never slows any transfer down.
    auto faster = scale_bandwidth(cluster, 1.0 + trial % 5);
    auto eval2 = evaluate_schedule(instance, rs.order, rs.schedule, faster);
    for (std::size_t k = 0; k < eval.per_stage.size(); ++k) {
      CHECK(eval2.per_stage[k].t_comm <= eval.per_stage[k].t_comm);
    }
    CHECK(eval2.t_overall <= eval.t_overall);
  }
}

TEST_CASE("evaluation CSV has per-stage rows and a summary") {
  ChainFixture fx;
  auto eval = evaluate_schedule(fx.instance, fx.order, fx.schedule, fx.cluster);
  std::string csv = evaluation_to_csv(eval, fx.schedule);
  CHECK(csv.find("stage_idx,device,t_comp,t_comm,t_exec") == 0);
  CHECK(csv.find("t_overall,sigma,throughput_mb_s,throughput_samples_s") !=
        std::string::npos);
  CHECK(csv.find("0,0,0.5,0,0.5") != std::string::npos);
}
