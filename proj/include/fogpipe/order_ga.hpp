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
#ifndef FOGPIPE_ORDER_GA_HPP_
#define FOGPIPE_ORDER_GA_HPP_

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fogpipe/cluster.hpp"
#include "fogpipe/common.hpp"
#include "fogpipe/partition_dp.hpp"
#include "fogpipe/timing.hpp"
#include "fogpipe/workload.hpp"

namespace fogpipe {

enum class DeviceOrderMode {
  kAuto,        // exhaustive for small pools, gene otherwise
  kFixed,       // always the cluster's declared pipeline sequence
  kGene,        // device permutation evolves as part of the chromosome
  kExhaustive,  // per-order scan over device permutations
};

struct GaParams {
  int population_size = 40;
  int generations = 60;
  double crossover_prob = 0.9;
  double mutation_prob = 0.2;
  std::uint64_t rng_seed = 0;
  DeviceOrderMode device_order_mode = DeviceOrderMode::kAuto;
  unsigned jobs = 0;             // 0 = hardware concurrency
  int device_sample_count = 64;  // permutation samples when the pool is large
};

/// One candidate: a topological layer order (plus a device permutation gene
/// when that mode is on), its schedule from the inner DP, and NSGA-II state.
struct Individual {
  ExecutionOrder order;
  std::vector<DeviceId> device_sequence;
  double t_overall = std::numeric_limits<double>::infinity();
  double sigma = std::numeric_limits<double>::infinity();
  int rank = 0;
  double crowding = 0.0;
  Schedule schedule;

  std::pair<double, double> fitness() const { return {t_overall, sigma}; }

  bool lex_less(const Individual &other) const {
    if (order.ids != other.order.ids) return order.ids < other.order.ids;
    return device_sequence < other.device_sequence;
  }
};

/// a dominates b iff a is no worse in both objectives and better in one.
inline bool dominates(const std::pair<double, double> &a,
                      const std::pair<double, double> &b) {
  return a.first <= b.first && a.second <= b.second &&
         (a.first < b.first || a.second < b.second);
}

/// NSGA-II fast non-dominated sorting. Returns fronts as index lists; front 0
/// holds the individuals dominated by none.
inline std::vector<std::vector<int>> fast_nondominated_sort(
    const std::vector<Individual> &population) {
  const int n = static_cast<int>(population.size());
  std::vector<std::vector<int>> dominated(n);
  std::vector<int> domination_count(n, 0);
  std::vector<std::vector<int>> fronts;

  std::vector<int> current;
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      if (p == q) continue;
      if (dominates(population[p].fitness(), population[q].fitness())) {
        dominated[p].push_back(q);
      } else if (dominates(population[q].fitness(), population[p].fitness())) {
        ++domination_count[p];
      }
    }
    if (domination_count[p] == 0) current.push_back(p);
  }
  while (!current.empty()) {
    fronts.push_back(current);
    std::vector<int> next;
    for (int p : current) {
      for (int q : dominated[p]) {
        if (--domination_count[q] == 0) next.push_back(q);
      }
    }
    current = std::move(next);
  }
  return fronts;
}

/// Crowding distance over one front's fitness values. Boundary points get
/// infinity; an objective whose max equals its min contributes nothing.
inline std::vector<double> crowding_distance(
    const std::vector<std::pair<double, double>> &front) {
  const std::size_t n = front.size();
  std::vector<double> dist(n, 0.0);
  if (n == 0) return dist;
  if (n <= 2) {
    std::fill(dist.begin(), dist.end(),
              std::numeric_limits<double>::infinity());
    return dist;
  }
  for (int obj = 0; obj < 2; ++obj) {
    auto value = [&](std::size_t i) {
      return obj == 0 ? front[i].first : front[i].second;
    };
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return value(a) < value(b);
    });
    dist[idx.front()] = std::numeric_limits<double>::infinity();
    dist[idx.back()] = std::numeric_limits<double>::infinity();
    double span = value(idx.back()) - value(idx.front());
    if (span <= 0.0) continue;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      dist[idx[i]] += (value(idx[i + 1]) - value(idx[i - 1])) / span;
    }
  }
  return dist;
}

/// The tournament decision rule: lower rank wins, then larger crowding, then
/// the earlier index.
inline int tournament_better(const std::vector<Individual> &population, int a,
                             int b) {
  const Individual &ia = population[static_cast<std::size_t>(a)];
  const Individual &ib = population[static_cast<std::size_t>(b)];
  if (ia.rank != ib.rank) return ia.rank < ib.rank ? a : b;
  if (ia.crowding != ib.crowding) return ia.crowding > ib.crowding ? a : b;
  return std::min(a, b);
}

/// Binary tournament (two draws with replacement). Returns the winner's index.
inline int tournament_select(const std::vector<Individual> &population,
                             std::mt19937_64 &rng) {
  std::uniform_int_distribution<int> pick(0,
                                          static_cast<int>(population.size()) - 1);
  int a = pick(rng);
  int b = pick(rng);
  return tournament_better(population, a, b);
}

/// Precomputed adjacency and pairwise reachability for the genetic operators.
class GraphAnalysis {
 public:
  explicit GraphAnalysis(const ModelGraph &graph) {
    for (const auto &l : graph.layers) {
      index_[l.layer_id] = static_cast<int>(ids_.size());
      ids_.push_back(l.layer_id);
    }
    const std::size_t n = ids_.size();
    adj_.resize(n);
    indeg_.assign(n, 0);
    words_ = (n + 63) / 64;
    reach_.assign(n * words_, 0);
    for (const auto &[u, v] : graph.edges) {
      adj_[index_.at(u)].push_back(index_.at(v));
      ++indeg_[index_.at(v)];
    }
    // Reverse topological sweep accumulates successor reachability.
    ExecutionOrder topo = canonical_topo_order(graph);
    for (auto it = topo.ids.rbegin(); it != topo.ids.rend(); ++it) {
      int u = index_.at(*it);
      for (int v : adj_[u]) {
        reach_[u * words_ + static_cast<std::size_t>(v) / 64] |=
            1ULL << (static_cast<std::size_t>(v) % 64);
        for (std::size_t w = 0; w < words_; ++w) {
          reach_[u * words_ + w] |= reach_[v * words_ + w];
        }
      }
    }
  }

  bool reaches(LayerId from, LayerId to) const {
    std::size_t u = static_cast<std::size_t>(index_.at(from));
    std::size_t v = static_cast<std::size_t>(index_.at(to));
    return (reach_[u * words_ + v / 64] >> (v % 64)) & 1ULL;
  }

  int dense_index(LayerId id) const { return index_.at(id); }
  const std::vector<int> &successors(int dense) const { return adj_[dense]; }
  const std::vector<int> &indegree() const { return indeg_; }
  LayerId layer_of(int dense) const { return ids_[static_cast<std::size_t>(dense)]; }
  std::size_t size() const { return ids_.size(); }

 private:
  std::map<LayerId, int> index_;
  std::vector<LayerId> ids_;
  std::vector<std::vector<int>> adj_;
  std::vector<int> indeg_;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> reach_;
};

namespace detail {

/// Stable re-sort to a valid topological order: Kahn's algorithm where the
/// ready node with the smallest position in `sequence` is emitted first.
inline ExecutionOrder repair_topological(const std::vector<LayerId> &sequence,
                                         const GraphAnalysis &analysis) {
  const std::size_t n = sequence.size();
  std::vector<int> priority(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    priority[static_cast<std::size_t>(analysis.dense_index(sequence[pos]))] =
        static_cast<int>(pos);
  }
  std::vector<int> indeg = analysis.indegree();
  using Entry = std::pair<int, int>;  // (priority, dense index)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indeg[i] == 0) ready.emplace(priority[i], static_cast<int>(i));
  }
  ExecutionOrder out;
  out.ids.reserve(n);
  while (!ready.empty()) {
    auto [prio, u] = ready.top();
    ready.pop();
    out.ids.push_back(analysis.layer_of(u));
    for (int v : analysis.successors(u)) {
      if (--indeg[static_cast<std::size_t>(v)] == 0) {
        ready.emplace(priority[static_cast<std::size_t>(v)], v);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Order-based crossover with repair: each child copies a random contiguous
/// segment from one parent, fills the rest in the other parent's relative
/// order, then is re-sorted to topological validity while preserving the
/// pre-repair positions as priorities.
inline std::pair<ExecutionOrder, ExecutionOrder> dag_crossover(
    const ExecutionOrder &p1, const ExecutionOrder &p2,
    const GraphAnalysis &analysis, std::mt19937_64 &rng) {
  const std::size_t n = p1.ids.size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t a = pick(rng);
  std::size_t b = pick(rng);
  if (a > b) std::swap(a, b);

  auto make_child = [&](const ExecutionOrder &seg_parent,
                        const ExecutionOrder &fill_parent) {
    std::vector<LayerId> child(n);
    std::vector<bool> in_segment(n, false);
    std::vector<bool> taken_id(n, false);
    for (std::size_t i = a; i <= b; ++i) {
      child[i] = seg_parent.ids[i];
      in_segment[i] = true;
      taken_id[static_cast<std::size_t>(
          analysis.dense_index(seg_parent.ids[i]))] = true;
    }
    std::size_t fill = 0;
    for (LayerId id : fill_parent.ids) {
      if (taken_id[static_cast<std::size_t>(analysis.dense_index(id))]) continue;
      while (in_segment[fill]) ++fill;
      child[fill++] = id;
    }
    return detail::repair_topological(child, analysis);
  };

  return {make_child(p1, p2), make_child(p2, p1)};
}

/// With probability p_m, swaps two positions whose layers are mutually
/// unreachable and whose swap provably keeps the order topological (no
/// successor of the earlier layer and no predecessor of the later layer sits
/// between them). Gives up after 16 sampled position pairs.
inline ExecutionOrder swap_mutation(const ExecutionOrder &order,
                                    const GraphAnalysis &analysis, double p_m,
                                    std::mt19937_64 &rng) {
  const std::size_t n = order.ids.size();
  if (n < 2) return order;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) >= p_m) return order;

  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (int attempt = 0; attempt < 16; ++attempt) {
    std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    LayerId u = order.ids[i];
    LayerId v = order.ids[j];
    if (analysis.reaches(u, v) || analysis.reaches(v, u)) continue;
    bool valid = true;
    for (std::size_t p = i + 1; p < j && valid; ++p) {
      LayerId w = order.ids[p];
      if (analysis.reaches(u, w) || analysis.reaches(w, v)) valid = false;
    }
    if (!valid) continue;
    ExecutionOrder mutated = order;
    std::swap(mutated.ids[i], mutated.ids[j]);
    return mutated;
  }
  return order;
}

namespace detail {

/// PMX crossover over device permutation genes.
inline std::pair<std::vector<DeviceId>, std::vector<DeviceId>> pmx_crossover(
    const std::vector<DeviceId> &p1, const std::vector<DeviceId> &p2,
    std::mt19937_64 &rng) {
  const std::size_t n = p1.size();
  if (n < 2) return {p1, p2};
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t a = pick(rng);
  std::size_t b = pick(rng);
  if (a > b) std::swap(a, b);

  auto make_child = [&](const std::vector<DeviceId> &seg,
                        const std::vector<DeviceId> &other) {
    std::vector<DeviceId> child(n, -1);
    std::map<DeviceId, DeviceId> mapping;  // seg value -> other value
    for (std::size_t i = a; i <= b; ++i) {
      child[i] = seg[i];
      mapping[seg[i]] = other[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= a && i <= b) continue;
      DeviceId v = other[i];
      while (mapping.count(v)) v = mapping.at(v);
      child[i] = v;
    }
    return child;
  };
  return {make_child(p1, p2), make_child(p2, p1)};
}

inline std::vector<DeviceId> gene_swap_mutation(std::vector<DeviceId> gene,
                                                double p_m,
                                                std::mt19937_64 &rng) {
  if (gene.size() < 2) return gene;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) >= p_m) return gene;
  std::uniform_int_distribution<std::size_t> pick(0, gene.size() - 1);
  std::size_t i = pick(rng);
  std::size_t j = pick(rng);
  std::swap(gene[i], gene[j]);
  return gene;
}

}  // namespace detail

/// Final pick from a Pareto front: minimum t_overall, then minimum sigma,
/// then the lexicographically smallest chromosome.
inline const Individual &select_final(const std::vector<Individual> &front) {
  if (front.empty()) throw Error("select_final: empty front");
  const Individual *best = &front[0];
  for (const auto &ind : front) {
    if (ind.t_overall < best->t_overall ||
        (ind.t_overall == best->t_overall && ind.sigma < best->sigma) ||
        (ind.t_overall == best->t_overall && ind.sigma == best->sigma &&
         ind.lex_less(*best))) {
      best = &ind;
    }
  }
  return *best;
}

struct GenerationStats {
  int gen = 0;
  double best_t_overall = 0.0;
  double best_sigma = 0.0;
  int front0_size = 0;
};

struct GaResult {
  std::vector<Individual> pareto_front;
  Individual best;
  ScheduleEvaluation best_eval;
  std::vector<GenerationStats> log;
};

namespace detail {

struct EvalCacheEntry {
  double t_overall;
  double sigma;
  Schedule schedule;
};

class GaEngine {
 public:
  GaEngine(const WorkloadInstance &instance, const ClusterSpec &cluster,
           int b_mu, const GaParams &params, const DpOptions &dp_options)
      : instance_(instance),
        cluster_(cluster),
        b_mu_(b_mu),
        params_(params),
        analysis_(instance.graph),
        rng_(params.rng_seed),
        dp_options_(dp_options) {
    if (params_.population_size < 2 || params_.population_size % 2 != 0) {
      throw Error("population_size must be >= 2 and even");
    }
    if (params_.generations < 0) throw Error("generations must be >= 0");
    auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob_ok(params_.crossover_prob) || !prob_ok(params_.mutation_prob)) {
      throw Error("probabilities must be in [0, 1]");
    }
    if (b_mu_ < 1) throw Error("micro_batch must be >= 1");
    if (cluster_.pipeline_sequence.empty()) {
      throw Error("cluster has an empty pipeline sequence");
    }
    mode_ = params_.device_order_mode;
    if (mode_ == DeviceOrderMode::kAuto) {
      mode_ = cluster_.pipeline_sequence.size() <= 6 ? DeviceOrderMode::kExhaustive
                                                     : DeviceOrderMode::kGene;
    }
  }

  GaResult run() {
    std::vector<Individual> pop = initial_population();
    evaluate(pop);

    GaResult result;
    rank_population(pop);
    log_generation(result, pop, 0);

    for (int gen = 1; gen <= params_.generations; ++gen) {
      std::vector<Individual> offspring = make_offspring(pop);
      evaluate(offspring);
      pop.reserve(pop.size() + offspring.size());
      for (auto &child : offspring) pop.push_back(std::move(child));
      pop = truncate(std::move(pop));
      rank_population(pop);
      log_generation(result, pop, gen);
    }

    auto fronts = fast_nondominated_sort(pop);
    for (int idx : fronts[0]) result.pareto_front.push_back(pop[idx]);
    result.best = select_final(result.pareto_front);
    if (!std::isfinite(result.best.t_overall)) {
      throw InfeasibleError("memory pruning leaves no feasible schedule");
    }
    result.best_eval = evaluate_schedule(instance_, result.best.order,
                                         result.best.schedule, cluster_);
    return result;
  }

 private:
  std::vector<Individual> initial_population() {
    std::vector<Individual> pop(static_cast<std::size_t>(params_.population_size));
    pop[0].order = canonical_topo_order(instance_.graph);
    for (std::size_t i = 1; i < pop.size(); ++i) {
      pop[i].order = random_topo_order(instance_.graph, rng_);
    }
    if (mode_ == DeviceOrderMode::kGene) {
      pop[0].device_sequence = cluster_.pipeline_sequence;
      for (std::size_t i = 1; i < pop.size(); ++i) {
        pop[i].device_sequence = cluster_.pipeline_sequence;
        std::shuffle(pop[i].device_sequence.begin(),
                     pop[i].device_sequence.end(), rng_);
      }
    }
    return pop;
  }

  void evaluate(std::vector<Individual> &pop) {
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      auto key = cache_key(pop[i]);
      auto it = cache_.find(key);
      if (it != cache_.end()) {
        apply_cached(pop[i], it->second);
      } else {
        pending.push_back(i);
      }
    }
    std::vector<EvalCacheEntry> fresh(pending.size());
    parallel_for(pending.size(), params_.jobs, [&](std::size_t slot) {
      fresh[slot] = evaluate_one(pop[pending[slot]]);
    });
    for (std::size_t slot = 0; slot < pending.size(); ++slot) {
      Individual &ind = pop[pending[slot]];
      cache_.emplace(cache_key(ind), fresh[slot]);
      apply_cached(ind, fresh[slot]);
    }
  }

  EvalCacheEntry evaluate_one(const Individual &ind) const {
    try {
      Schedule schedule;
      switch (mode_) {
        case DeviceOrderMode::kFixed:
          schedule = dp_partition(instance_, cluster_, ind.order,
                                  cluster_.pipeline_sequence, b_mu_, dp_options_)
                         .schedule;
          break;
        case DeviceOrderMode::kGene:
          schedule = dp_partition(instance_, cluster_, ind.order,
                                  ind.device_sequence, b_mu_, dp_options_)
                         .schedule;
          break;
        default: {
          DeviceOrderSearch search;
          search.sample_count = params_.device_sample_count;
          search.seed = split_seed(params_.rng_seed, 0x9a);
          schedule = best_over_device_orders(instance_, cluster_, ind.order,
                                             b_mu_, dp_options_, search)
                         .schedule;
          break;
        }
      }
      ScheduleEvaluation eval =
          evaluate_schedule(instance_, ind.order, schedule, cluster_);
      return {eval.t_overall, eval.sigma, std::move(schedule)};
    } catch (const InfeasibleError &) {
      return {std::numeric_limits<double>::infinity(),
              std::numeric_limits<double>::infinity(), Schedule{}};
    }
  }

  static void apply_cached(Individual &ind, const EvalCacheEntry &entry) {
    ind.t_overall = entry.t_overall;
    ind.sigma = entry.sigma;
    ind.schedule = entry.schedule;
  }

  std::pair<std::vector<LayerId>, std::vector<DeviceId>> cache_key(
      const Individual &ind) const {
    return {ind.order.ids, ind.device_sequence};
  }

  void rank_population(std::vector<Individual> &pop) const {
    auto fronts = fast_nondominated_sort(pop);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      std::vector<std::pair<double, double>> fitness;
      fitness.reserve(fronts[f].size());
      for (int idx : fronts[f]) fitness.push_back(pop[idx].fitness());
      auto dist = crowding_distance(fitness);
      for (std::size_t i = 0; i < fronts[f].size(); ++i) {
        pop[fronts[f][i]].rank = static_cast<int>(f);
        pop[fronts[f][i]].crowding = dist[i];
      }
    }
  }

  std::vector<Individual> make_offspring(const std::vector<Individual> &pop) {
    std::vector<Individual> offspring;
    offspring.reserve(static_cast<std::size_t>(params_.population_size));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    while (offspring.size() < static_cast<std::size_t>(params_.population_size)) {
      const Individual &pa = pop[static_cast<std::size_t>(
          tournament_select(pop, rng_))];
      const Individual &pb = pop[static_cast<std::size_t>(
          tournament_select(pop, rng_))];
      Individual ca, cb;
      bool crossed = coin(rng_) < params_.crossover_prob;
      if (crossed) {
        auto [o1, o2] = dag_crossover(pa.order, pb.order, analysis_, rng_);
        ca.order = std::move(o1);
        cb.order = std::move(o2);
      } else {
        ca.order = pa.order;
        cb.order = pb.order;
      }
      if (mode_ == DeviceOrderMode::kGene) {
        if (crossed) {
          auto [g1, g2] = detail::pmx_crossover(pa.device_sequence,
                                                pb.device_sequence, rng_);
          ca.device_sequence = std::move(g1);
          cb.device_sequence = std::move(g2);
        } else {
          ca.device_sequence = pa.device_sequence;
          cb.device_sequence = pb.device_sequence;
        }
        ca.device_sequence = detail::gene_swap_mutation(
            std::move(ca.device_sequence), params_.mutation_prob, rng_);
        cb.device_sequence = detail::gene_swap_mutation(
            std::move(cb.device_sequence), params_.mutation_prob, rng_);
      }
      ca.order = swap_mutation(ca.order, analysis_, params_.mutation_prob, rng_);
      cb.order = swap_mutation(cb.order, analysis_, params_.mutation_prob, rng_);
      offspring.push_back(std::move(ca));
      offspring.push_back(std::move(cb));
    }
    return offspring;
  }

  /// Merge-and-truncate to population_size by (front, crowding). The partial
  /// front breaks crowding ties toward better fitness so the running best is
  /// never dropped.
  std::vector<Individual> truncate(std::vector<Individual> merged) const {
    auto fronts = fast_nondominated_sort(merged);
    std::vector<Individual> next;
    next.reserve(static_cast<std::size_t>(params_.population_size));
    for (const auto &front : fronts) {
      if (next.size() == static_cast<std::size_t>(params_.population_size)) break;
      std::vector<std::pair<double, double>> fitness;
      fitness.reserve(front.size());
      for (int idx : front) fitness.push_back(merged[idx].fitness());
      auto dist = crowding_distance(fitness);
      std::vector<std::size_t> by_crowding(front.size());
      for (std::size_t i = 0; i < front.size(); ++i) by_crowding[i] = i;
      std::sort(by_crowding.begin(), by_crowding.end(),
                [&](std::size_t a, std::size_t b) {
                  if (dist[a] != dist[b]) return dist[a] > dist[b];
                  if (fitness[a] != fitness[b]) return fitness[a] < fitness[b];
                  return merged[front[a]].lex_less(merged[front[b]]);
                });
      for (std::size_t i : by_crowding) {
        if (next.size() == static_cast<std::size_t>(params_.population_size)) break;
        next.push_back(std::move(merged[front[i]]));
      }
    }
    return next;
  }

  void log_generation(GaResult &result, const std::vector<Individual> &pop,
                      int gen) const {
    const Individual *best = &pop[0];
    int front0 = 0;
    for (const auto &ind : pop) {
      if (ind.rank == 0) ++front0;
      if (ind.t_overall < best->t_overall ||
          (ind.t_overall == best->t_overall && ind.sigma < best->sigma)) {
        best = &ind;
      }
    }
    result.log.push_back({gen, best->t_overall, best->sigma, front0});
  }

  const WorkloadInstance &instance_;
  const ClusterSpec &cluster_;
  int b_mu_;
  GaParams params_;
  GraphAnalysis analysis_;
  std::mt19937_64 rng_;
  DeviceOrderMode mode_ = DeviceOrderMode::kAuto;
  DpOptions dp_options_;
  std::map<std::pair<std::vector<LayerId>, std::vector<DeviceId>>, EvalCacheEntry>
      cache_;
};

}  // namespace detail

/// Full search: NSGA-II over topological layer orders with the min-max DP as
/// the inner per-order scheduler. The canonical order is always seeded into
/// the initial population and truncation is elitist, so the final best never
/// loses to the canonical-order DP schedule.
inline GaResult run_ga_dphds(const WorkloadInstance &instance,
                             const ClusterSpec &cluster, int b_mu,
                             const GaParams &params,
                             const DpOptions &dp_options = {}) {
  detail::GaEngine engine(instance, cluster, b_mu, params, dp_options);
  return engine.run();
}

inline std::string generations_log_to_csv(const std::vector<GenerationStats> &log) {
  std::string out = "gen,best_t_overall,best_sigma,front0_size\n";
  char buf[160];
  for (const auto &row : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%d\n", row.gen,
                  row.best_t_overall, row.best_sigma, row.front0_size);
    out += buf;
  }
  return out;
}

inline std::string pareto_to_csv(const std::vector<Individual> &front) {
  std::string out = "t_overall,sigma,order\n";
  char buf[64];
  for (const auto &ind : front) {
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g,", ind.t_overall, ind.sigma);
    out += buf;
    for (std::size_t i = 0; i < ind.order.ids.size(); ++i) {
      if (i) out += " ";
      out += std::to_string(ind.order.ids[i]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace fogpipe

#endif  // FOGPIPE_ORDER_GA_HPP_
