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
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fogpipe/bounds.hpp"
#include "fogpipe/cluster.hpp"
#include "fogpipe/order_ga.hpp"
#include "fogpipe/partition_dp.hpp"
#include "fogpipe/pipeline_sim.hpp"
#include "fogpipe/runtime.hpp"
#include "fogpipe/timing.hpp"
#include "fogpipe/workload.hpp"

namespace {

using namespace fogpipe;

constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitIo = 4;
constexpr int kExitProtocol = 5;

struct GaFlags {
  int pop = 40;
  int gens = 60;
  double pc = 0.9;
  double pm = 0.2;
  std::uint64_t seed = 0;
  std::string device_order_mode = "auto";
  unsigned jobs = 0;
  bool no_memory_pruning = false;

  void attach(CLI::App *cmd) {
    cmd->add_option("--pop", pop, "population size (even, >= 2)");
    cmd->add_option("--gens", gens, "number of generations");
    cmd->add_option("--pc", pc, "crossover probability");
    cmd->add_option("--pm", pm, "mutation probability");
    cmd->add_option("--seed", seed, "master RNG seed");
    cmd->add_option("--device-order-mode", device_order_mode,
                    "auto|fixed|gene|exhaustive")
        ->check(CLI::IsMember({"auto", "fixed", "gene", "exhaustive"}));
    cmd->add_option("--jobs", jobs, "parallel evaluation threads (0 = auto)");
    cmd->add_flag("--no-memory-pruning", no_memory_pruning,
                  "disable per-stage memory feasibility pruning");
  }

  GaParams params() const {
    GaParams p;
    p.population_size = pop;
    p.generations = gens;
    p.crossover_prob = pc;
    p.mutation_prob = pm;
    p.rng_seed = seed;
    p.jobs = jobs;
    if (device_order_mode == "fixed") p.device_order_mode = DeviceOrderMode::kFixed;
    else if (device_order_mode == "gene") p.device_order_mode = DeviceOrderMode::kGene;
    else if (device_order_mode == "exhaustive")
      p.device_order_mode = DeviceOrderMode::kExhaustive;
    else p.device_order_mode = DeviceOrderMode::kAuto;
    return p;
  }

  DpOptions dp_options() const { return DpOptions{!no_memory_pruning}; }
};

void write_text_file(const std::string &path, const std::string &content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path);
  out << content;
}

CostRanges ranges_for_cluster(const ClusterSpec &cluster) {
  CostRanges ranges;
  ranges.device_ids.clear();
  for (const auto &d : cluster.devices) ranges.device_ids.push_back(d.device_id);
  return ranges;
}

int cmd_gen(const std::string &kind, const std::string &cluster_path,
            const std::string &out_path, int branches, int levels, int blocks,
            bool expand_st, int layers, double density, std::uint64_t seed,
            const Range &proc, const Range &speed, const Range &out_bytes) {
  ClusterSpec cluster = load_cluster(cluster_path);
  CostRanges ranges = ranges_for_cluster(cluster);
  ranges.base_seconds = proc;
  ranges.device_speed = speed;
  ranges.output_bytes = out_bytes;
  WorkloadInstance inst;
  if (kind == "multigran") {
    inst = gen_multigran_dag(branches, levels, blocks, expand_st, ranges, seed,
                             cluster_path);
  } else {
    inst = gen_random_dag(layers, density, ranges, seed, cluster_path);
  }
  save_workload(inst, out_path);
  std::printf("wrote %s: %zu layers, %zu edges, %zu profile entries\n",
              out_path.c_str(), inst.graph.n_layers(), inst.graph.edges.size(),
              inst.profiles.size());
  return 0;
}

int cmd_schedule(const std::string &workload_path, const std::string &cluster_path,
                 const std::string &out_path, const std::string &log_path,
                 const std::string &pareto_path, int b_mu, const GaFlags &ga) {
  WorkloadInstance inst = load_workload(workload_path);
  ClusterSpec cluster = load_cluster(cluster_path);
  GaResult result = run_ga_dphds(inst, cluster, b_mu, ga.params(), ga.dp_options());
  save_schedule(result.best.order, result.best.schedule,
                result.best_eval.t_overall, out_path);
  if (!log_path.empty()) {
    write_text_file(log_path, generations_log_to_csv(result.log));
  }
  if (!pareto_path.empty()) {
    write_text_file(pareto_path, pareto_to_csv(result.pareto_front));
  }
  std::printf("t_overall=%.9g s  sigma=%.9g s  predicted=%.9g samples/s\n",
              result.best_eval.t_overall, result.best_eval.sigma,
              result.best_eval.throughput_samples_per_s);
  return 0;
}

int cmd_simulate(const std::string &workload_path, const std::string &cluster_path,
                 const std::string &schedule_path, int batches,
                 const std::vector<double> &jitter, std::uint64_t seed,
                 const std::string &out_path, const std::string &trace_path) {
  WorkloadInstance inst = load_workload(workload_path);
  ClusterSpec cluster = load_cluster(cluster_path);
  ScheduleFile file = load_schedule(schedule_path);

  std::optional<std::pair<double, double>> jitter_ms = cluster.jitter_ms;
  if (!jitter.empty()) {
    if (jitter.size() != 2) throw Error("--jitter wants two values: lo hi (ms)");
    jitter_ms = {jitter[0], jitter[1]};
  }
  SimReport report = simulate(inst, file.order, file.schedule, cluster, batches,
                              jitter_ms, seed, !trace_path.empty());
  std::printf("steady_interval=%.9g s  makespan=%.9g s  throughput=%.9g samples/s\n",
              report.steady_interval, report.makespan,
              report.throughput_samples_per_s);
  if (!out_path.empty()) {
    char buf[256];
    std::string csv = "steady_interval_s,makespan_s,throughput_samples_s\n";
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g\n", report.steady_interval,
                  report.makespan, report.throughput_samples_per_s);
    csv += buf;
    write_text_file(out_path, csv);
  }
  if (!trace_path.empty() && report.trace) {
    std::string csv = "resource,batch,start_s,end_s\n";
    char buf[256];
    for (const auto &ev : *report.trace) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%.12g,%.12g\n", ev.resource.c_str(),
                    ev.batch, ev.start, ev.end);
      csv += buf;
    }
    write_text_file(trace_path, csv);
  }
  return 0;
}

int cmd_bound(const std::string &workload_path, const std::string &cluster_path,
              double alpha, double beta, double delta, double o_avg_mb,
              double b_good_mbps, int b_mu, const std::string &mode_name,
              const std::string &out_path) {
  BoundInputs inputs;
  inputs.delta_s = delta;
  inputs.b_mu = b_mu;
  inputs.o_avg_bytes = o_avg_mb * 1e6;
  inputs.b_good_bps = b_good_mbps * 1e6;

  if (!workload_path.empty()) {
    TensorStats stats = tensor_stats(load_workload(workload_path));
    inputs.o_max_bytes = stats.o_max_bytes;
    inputs.o_avg_bytes = stats.o_avg_bytes;
    alpha = stats.alpha;
  }
  double b_bad_bps = 0.0;
  if (!cluster_path.empty()) {
    BandwidthAsymmetry asym = bandwidth_asymmetry(load_cluster(cluster_path));
    inputs.b_good_bps = asym.b_good_bps;
    b_bad_bps = asym.b_bad_bps;
    beta = asym.beta;
  }
  if (alpha <= 0.0) throw Error("need --alpha or --workload");
  if (beta <= 0.0) throw Error("need --beta or --cluster");
  if (workload_path.empty()) inputs.o_max_bytes = alpha * inputs.o_avg_bytes;
  if (cluster_path.empty()) b_bad_bps = inputs.b_good_bps / beta;
  inputs.b_bad_bps = b_bad_bps;

  BoundMode mode = (mode_name == "paper-arith" || mode_name == "paper_arith")
                       ? BoundMode::kPaperArith
                       : BoundMode::kTheorem;
  BoundReport report = throughput_gain_bound(inputs, mode);
  nlohmann::json j = bound_report_to_json(report, mode);
  std::cout << j.dump(2) << "\n";
  if (!out_path.empty()) write_text_file(out_path, j.dump(2) + "\n");
  return 0;
}

int cmd_bench(const std::string &devices_path, const std::string &memberships_path,
              const std::string &workload_path, const std::string &out_path,
              const std::string &modes_csv, int reps, int b_mu, int batches,
              const std::vector<double> &jitter, double scale,
              const GaFlags &ga) {
  ClusterSpec pool = load_cluster(devices_path);
  if (scale != 1.0) pool = scale_bandwidth(pool, scale);

  std::ifstream in(memberships_path);
  if (!in) throw IoError("cannot open memberships file: " + memberships_path);
  nlohmann::json mj;
  try {
    in >> mj;
  } catch (const nlohmann::json::exception &e) {
    throw IoError("cannot parse memberships file: " + std::string(e.what()));
  }

  BenchConfig config;
  config.reps = reps;
  config.seed = ga.seed;
  config.b_mu = b_mu;
  config.n_microbatches = batches;
  config.ga = ga.params();
  if (!jitter.empty()) {
    if (jitter.size() != 2) throw Error("--jitter wants two values: lo hi (ms)");
    if (jitter[0] == 0.0 && jitter[1] == 0.0) config.jitter_ms.reset();
    else config.jitter_ms = {jitter[0], jitter[1]};
  }
  config.modes.clear();
  std::stringstream ss(modes_csv);
  std::string mode;
  while (std::getline(ss, mode, ',')) {
    if (!mode.empty()) config.modes.push_back(mode);
  }

  std::optional<WorkloadInstance> fixed;
  if (!workload_path.empty()) fixed = load_workload(workload_path);

  std::vector<WorkloadInstance> instances;
  std::vector<std::pair<std::string, ClusterSpec>> clusters;
  std::uint64_t cluster_idx = 0;
  try {
    for (const auto &cj : mj.at("clusters")) {
      std::string name = cj.at("name").get<std::string>();
      auto member_ids = cj.at("devices").get<std::vector<DeviceId>>();
      ClusterSpec cluster;
      cluster.jitter_ms = pool.jitter_ms;
      for (DeviceId id : member_ids) cluster.devices.push_back(pool.device(id));
      cluster.pipeline_sequence = member_ids;
      validate_cluster(cluster);

      if (fixed) {
        instances.push_back(*fixed);
      } else {
        CostRanges ranges = ranges_for_cluster(cluster);
        instances.push_back(gen_multigran_dag(
            3, 3, 2, false, ranges, split_seed(ga.seed, 0xbe0 + cluster_idx),
            name));
      }
      clusters.emplace_back(name, std::move(cluster));
      ++cluster_idx;
    }
  } catch (const nlohmann::json::exception &e) {
    throw IoError("malformed memberships file: " + std::string(e.what()));
  }

  auto rows = bench_suite(instances, clusters, config);
  std::string csv = bench_to_csv(rows);
  if (!out_path.empty()) write_text_file(out_path, csv);
  else std::cout << csv;
  std::fprintf(stderr, "bench: %zu rows over %zu clusters x %zu modes\n",
               rows.size(), clusters.size(), config.modes.size());
  return 0;
}

int cmd_worker(const std::string &listen, std::uint32_t device_id,
               const std::string &name, double timeout_s) {
  auto [host, port] = net::split_endpoint(listen);
  WorkerOptions options;
  options.listen_host = host;
  options.listen_port = port;
  options.device_id = device_id;
  options.name = name;
  options.timeout_s = timeout_s;
  options.on_listening = [&](std::uint16_t bound) {
    std::printf("worker %s (device %u) listening on %s:%u\n", name.c_str(),
                device_id, host.c_str(), bound);
    std::fflush(stdout);
  };
  worker_run(options);
  std::printf("worker %s done\n", name.c_str());
  return 0;
}

int cmd_manager(const std::string &workload_path, const std::string &cluster_path,
                const std::vector<std::string> &workers, int b_mu, int batches,
                int reps, double timeout_s, bool logical_transfer,
                const std::string &out_path, const GaFlags &ga) {
  WorkloadInstance inst = load_workload(workload_path);
  ClusterSpec cluster = load_cluster(cluster_path);
  ManagerOptions options;
  options.worker_endpoints = workers;
  options.b_mu = b_mu;
  options.n_microbatches = batches;
  options.profile_reps = reps;
  options.timeout_s = timeout_s;
  options.logical_transfer = logical_transfer;
  options.ga = ga.params();
  ManagerReport report = manager_run(inst, cluster, options);

  double ratio = report.predicted_samples_per_s > 0.0
                     ? report.measured_samples_per_s / report.predicted_samples_per_s
                     : 0.0;
  std::printf("predicted=%.6g samples/s  measured=%.6g samples/s  ratio=%.4g\n",
              report.predicted_samples_per_s, report.measured_samples_per_s, ratio);
  std::printf("batches injected=%llu at_sink=%llu\n",
              static_cast<unsigned long long>(report.batches_injected),
              static_cast<unsigned long long>(report.batches_at_sink));
  if (!out_path.empty()) {
    nlohmann::json j;
    j["predicted_samples_per_s"] = report.predicted_samples_per_s;
    j["measured_samples_per_s"] = report.measured_samples_per_s;
    j["batches_injected"] = report.batches_injected;
    j["batches_at_sink"] = report.batches_at_sink;
    j["schedule"] = schedule_to_json(report.order, report.schedule,
                                     report.predicted_samples_per_s > 0
                                         ? static_cast<double>(b_mu) /
                                               report.predicted_samples_per_s
                                         : 0.0);
    write_text_file(out_path, j.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"fogpipe: heterogeneous pipeline-parallel inference scheduling toolkit"};
  app.require_subcommand(1);

  // gen
  auto *gen = app.add_subcommand("gen", "generate a synthetic workload file");
  std::string gen_kind = "multigran", gen_cluster, gen_out;
  int gen_branches = 3, gen_levels = 3, gen_blocks = 2, gen_layers = 8;
  bool gen_expand = false;
  double gen_density = 0.3;
  std::uint64_t gen_seed = 0;
  Range gen_proc{0.005, 0.05}, gen_speed{0.5, 2.0}, gen_bytes{250e3, 4e6};
  gen->add_option("--kind", gen_kind, "multigran|random")
      ->check(CLI::IsMember({"multigran", "random"}));
  gen->add_option("--cluster", gen_cluster, "cluster file (device ids to profile)")
      ->required();
  gen->add_option("--out", gen_out, "output workload file")->required();
  gen->add_option("--branches", gen_branches, "temporal branches");
  gen->add_option("--levels", gen_levels, "spatial levels per branch");
  gen->add_option("--blocks", gen_blocks, "feature blocks per chain");
  gen->add_flag("--expand-st", gen_expand, "expand each block into a 3-node chain");
  gen->add_option("--layers", gen_layers, "layer count (random kind)");
  gen->add_option("--density", gen_density, "edge density (random kind)");
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--proc-lo", gen_proc.lo, "base layer seconds, lower bound");
  gen->add_option("--proc-hi", gen_proc.hi, "base layer seconds, upper bound");
  gen->add_option("--speed-lo", gen_speed.lo, "device speed factor, lower bound");
  gen->add_option("--speed-hi", gen_speed.hi, "device speed factor, upper bound");
  gen->add_option("--bytes-lo", gen_bytes.lo, "output bytes, lower bound");
  gen->add_option("--bytes-hi", gen_bytes.hi, "output bytes, upper bound");

  // schedule
  auto *sched = app.add_subcommand("schedule", "run the full order+partition search");
  std::string sched_workload, sched_cluster, sched_out, sched_log, sched_pareto;
  int sched_bmu = 16;
  GaFlags sched_ga;
  sched->add_option("--workload", sched_workload)->required();
  sched->add_option("--cluster", sched_cluster)->required();
  sched->add_option("--out", sched_out, "schedule file")->required();
  sched->add_option("--log", sched_log, "generations log CSV");
  sched->add_option("--pareto", sched_pareto, "final Pareto front CSV");
  sched->add_option("--b-mu", sched_bmu, "micro-batch size");
  sched_ga.attach(sched);

  // simulate
  auto *sim = app.add_subcommand("simulate", "discrete-event pipeline simulation");
  std::string sim_workload, sim_cluster, sim_schedule, sim_out, sim_trace;
  int sim_batches = 32;
  std::vector<double> sim_jitter;
  std::uint64_t sim_seed = 0;
  sim->add_option("--workload", sim_workload)->required();
  sim->add_option("--cluster", sim_cluster)->required();
  sim->add_option("--schedule", sim_schedule)->required();
  sim->add_option("--batches", sim_batches, "micro-batches to push (>= 2)");
  sim->add_option("--jitter", sim_jitter, "per-transfer jitter lo hi (ms)")
      ->expected(2);
  sim->add_option("--seed", sim_seed, "jitter RNG seed");
  sim->add_option("--out", sim_out, "summary CSV");
  sim->add_option("--trace", sim_trace, "event trace CSV");

  // bound
  auto *bound = app.add_subcommand("bound", "throughput-gain lower bound");
  std::string bound_workload, bound_cluster, bound_mode = "theorem", bound_out;
  double bound_alpha = 0.0, bound_beta = 0.0, bound_delta = 0.01;
  double bound_oavg_mb = 1.11, bound_bgood_mbps = 200.0;
  int bound_bmu = 16;
  bound->add_option("--workload", bound_workload, "derive alpha from a workload");
  bound->add_option("--cluster", bound_cluster, "derive beta from a cluster");
  bound->add_option("--alpha", bound_alpha, "tensor imbalance ratio");
  bound->add_option("--beta", bound_beta, "link asymmetry ratio");
  bound->add_option("--delta", bound_delta, "residual imbalance (s)");
  bound->add_option("--o-avg-mb", bound_oavg_mb, "average output tensor (MB)");
  bound->add_option("--b-good-mbps", bound_bgood_mbps, "good-link floor (MB/s)");
  bound->add_option("--b-mu", bound_bmu, "micro-batch size");
  bound->add_option("--mode", bound_mode, "theorem|paper-arith")
      ->check(CLI::IsMember({"theorem", "paper-arith", "paper_arith"}));
  bound->add_option("--out", bound_out, "write the report JSON here too");

  // bench
  auto *bench = app.add_subcommand("bench", "scheduler/baseline comparison sweeps");
  std::string bench_devices, bench_memberships, bench_workload, bench_out;
  std::string bench_modes = "gadphds,baseline,no_order_opt";
  int bench_reps = 10, bench_bmu = 16, bench_batches = 32;
  std::vector<double> bench_jitter;
  double bench_scale = 1.0;
  GaFlags bench_ga;
  bench->add_option("--devices", bench_devices, "device pool cluster file")
      ->required();
  bench->add_option("--memberships", bench_memberships, "cluster memberships file")
      ->required();
  bench->add_option("--workload", bench_workload,
                    "fixed workload (default: per-cluster synthetic template)");
  bench->add_option("--out", bench_out, "output CSV (default stdout)");
  bench->add_option("--modes", bench_modes, "comma-separated mode list");
  bench->add_option("--reps", bench_reps, "repetitions per cell");
  bench->add_option("--b-mu", bench_bmu, "micro-batch size");
  bench->add_option("--batches", bench_batches, "micro-batches per simulation");
  bench->add_option("--jitter", bench_jitter, "jitter lo hi in ms (0 0 disables)")
      ->expected(2);
  bench->add_option("--scale", bench_scale, "bandwidth scaling factor");
  bench_ga.attach(bench);

  // worker
  auto *worker = app.add_subcommand("worker", "run a fog worker node");
  std::string worker_listen = "127.0.0.1:0", worker_name = "worker";
  std::uint32_t worker_device = 0;
  double worker_timeout = 120.0;
  worker->add_option("--listen", worker_listen, "host:port (port 0 = ephemeral)");
  worker->add_option("--device-id", worker_device, "device id to register")
      ->required();
  worker->add_option("--name", worker_name, "worker name");
  worker->add_option("--timeout", worker_timeout, "read timeout (s)");

  // manager
  auto *manager = app.add_subcommand("manager", "run the fog manager");
  std::string mgr_workload, mgr_cluster, mgr_out;
  std::vector<std::string> mgr_workers;
  int mgr_bmu = 1, mgr_batches = 20, mgr_reps = 3;
  double mgr_timeout = 10.0;
  bool mgr_logical = false;
  GaFlags mgr_ga;
  manager->add_option("--workload", mgr_workload)->required();
  manager->add_option("--cluster", mgr_cluster)->required();
  manager->add_option("--workers", mgr_workers, "worker endpoints host:port")
      ->required()
      ->delimiter(',');
  manager->add_option("--b-mu", mgr_bmu, "micro-batch size");
  manager->add_option("--batches", mgr_batches, "micro-batches to stream");
  manager->add_option("--reps", mgr_reps, "profiling repetitions per layer");
  manager->add_option("--timeout", mgr_timeout, "per-worker timeout (s)");
  manager->add_flag("--logical-transfer", mgr_logical,
                    "carry tensor sizes logically instead of zero-filled bytes");
  manager->add_option("--out", mgr_out, "report JSON");
  mgr_ga.attach(manager);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen(gen_kind, gen_cluster, gen_out, gen_branches, gen_levels,
                     gen_blocks, gen_expand, gen_layers, gen_density, gen_seed,
                     gen_proc, gen_speed, gen_bytes);
    }
    if (sched->parsed()) {
      return cmd_schedule(sched_workload, sched_cluster, sched_out, sched_log,
                          sched_pareto, sched_bmu, sched_ga);
    }
    if (sim->parsed()) {
      return cmd_simulate(sim_workload, sim_cluster, sim_schedule, sim_batches,
                          sim_jitter, sim_seed, sim_out, sim_trace);
    }
    if (bound->parsed()) {
      return cmd_bound(bound_workload, bound_cluster, bound_alpha, bound_beta,
                       bound_delta, bound_oavg_mb, bound_bgood_mbps, bound_bmu,
                       bound_mode, bound_out);
    }
    if (bench->parsed()) {
      return cmd_bench(bench_devices, bench_memberships, bench_workload,
                       bench_out, bench_modes, bench_reps, bench_bmu,
                       bench_batches, bench_jitter, bench_scale, bench_ga);
    }
    if (worker->parsed()) {
      return cmd_worker(worker_listen, worker_device, worker_name, worker_timeout);
    }
    if (manager->parsed()) {
      return cmd_manager(mgr_workload, mgr_cluster, mgr_workers, mgr_bmu,
                         mgr_batches, mgr_reps, mgr_timeout, mgr_logical,
                         mgr_out, mgr_ga);
    }
  } catch (const IoError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const InfeasibleError &e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const ProtocolError &e) {
    std::cerr << "protocol fault: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
