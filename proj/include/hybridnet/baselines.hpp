#pragma once

// Classical numeric opinion models used as analytic oracles and as baselines
// next to experiment runs.
//
// Friedkin-Johnsen (uniform susceptibility lambda, unweighted graph):
//   z_i' = (s_i + lambda * sum_{j in N(i)} z_j) / (1 + lambda * |N(i)|)
// whose fixed point solves (I + lambda * L) z = s with L the graph Laplacian.
//
// Deffuant bounded confidence: for one pair (i, j) with |x_i - x_j| < eps,
//   x_i' = x_i + mu (x_j - x_i),  x_j' = x_j + mu (x_i - x_j)
// applied simultaneously.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hybridnet/error.hpp"
#include "hybridnet/metrics.hpp"
#include "hybridnet/random.hpp"
#include "hybridnet/topology.hpp"

namespace hybridnet::baselines {

using Adjacency = std::vector<std::vector<std::size_t>>;

struct FjConfig {
  std::vector<double> innate;  // s, entries in [-1, 1]
  Adjacency neighbors;
  double susceptibility = 1.0;
  std::size_t max_iterations = 100'000;
  double tolerance = 1e-12;

  void validate() const {
    if (!(susceptibility >= 0.0 && susceptibility <= 1.0)) {
      throw Error(ErrorCode::config, "susceptibility must lie in [0, 1]");
    }
    if (!(tolerance > 0.0)) throw Error(ErrorCode::config, "tolerance must be > 0");
    if (neighbors.size() != innate.size()) {
      throw Error(ErrorCode::dimension_mismatch, "adjacency has " + std::to_string(neighbors.size()) +
                                                     " rows for " + std::to_string(innate.size()) + " opinions");
    }
    for (double s : innate) {
      if (!(s >= -1.0 && s <= 1.0)) throw Error(ErrorCode::config, "innate opinions must lie in [-1, 1]");
    }
    for (const auto& row : neighbors) {
      for (auto j : row) {
        if (j >= innate.size()) throw Error(ErrorCode::invalid_node, "neighbour index " + std::to_string(j));
      }
    }
  }
};

inline std::vector<double> fj_step(std::span<const double> state, const FjConfig& cfg) {
  if (state.size() != cfg.innate.size() || cfg.neighbors.size() != cfg.innate.size()) {
    throw Error(ErrorCode::dimension_mismatch, "state has " + std::to_string(state.size()) + " entries for " +
                                                   std::to_string(cfg.innate.size()) + " nodes");
  }
  const double lambda = cfg.susceptibility;
  std::vector<double> next(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) {
    double sum = 0.0;
    for (auto j : cfg.neighbors[i]) sum += state[j];
    next[i] = (cfg.innate[i] + lambda * sum) / (1.0 + lambda * static_cast<double>(cfg.neighbors[i].size()));
  }
  return next;
}

struct FjResult {
  std::vector<double> opinions;
  std::size_t iterations = 0;
};

/// Iterates fj_step from z = s until the sup-norm change drops below tolerance.
inline FjResult fj_fixed_point(const FjConfig& cfg) {
  cfg.validate();
  std::vector<double> z = cfg.innate;
  for (std::size_t k = 1; k <= cfg.max_iterations; ++k) {
    auto next = fj_step(z, cfg);
    double delta = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) delta = std::max(delta, std::abs(next[i] - z[i]));
    z = std::move(next);
    if (delta < cfg.tolerance) return {std::move(z), k};
  }
  throw Error(ErrorCode::non_convergence, "no fixed point within " + std::to_string(cfg.max_iterations) + " iterations");
}

enum class Pairing { random_pair, lattice_neighbor };

struct BcConfig {
  std::vector<double> opinions;  // x, entries in [0, 1]
  double epsilon = 0.5;
  double mu = 0.5;
  Pairing pairing = Pairing::random_pair;
  std::uint64_t rng_seed = 1;
  std::size_t max_steps = 10'000;
  Adjacency neighbors;  // required for lattice_neighbor pairing

  void validate() const {
    if (!(epsilon >= 0.0)) throw Error(ErrorCode::config, "epsilon must be >= 0");
    if (!(mu > 0.0 && mu <= 0.5)) throw Error(ErrorCode::config, "mu must lie in (0, 0.5]");
    for (double x : opinions) {
      if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::config, "opinions must lie in [0, 1]");
    }
    if (pairing == Pairing::lattice_neighbor && neighbors.size() != opinions.size()) {
      throw Error(ErrorCode::config, "lattice pairing needs an adjacency for every node");
    }
  }
};

/// Applies the pairwise rule to (i, j). Returns whether the pair interacted.
inline bool bc_interact(std::span<double> x, std::size_t i, std::size_t j, double epsilon, double mu) {
  if (i >= x.size() || j >= x.size()) throw Error(ErrorCode::invalid_node, "pair index out of range");
  if (i == j) return false;
  const double xi = x[i], xj = x[j];
  if (!(std::abs(xi - xj) < epsilon)) return false;
  x[i] = xi + mu * (xj - xi);
  x[j] = xj + mu * (xi - xj);
  return true;
}

/// One interaction event: draws a pair per the pairing rule and applies it.
inline std::vector<double> bc_step(std::span<const double> state, const BcConfig& cfg, Rng& rng) {
  std::vector<double> x(state.begin(), state.end());
  if (x.size() < 2) return x;
  std::size_t i = uniform_index(rng, x.size());
  std::size_t j;
  if (cfg.pairing == Pairing::lattice_neighbor) {
    if (cfg.neighbors.size() != x.size()) {
      throw Error(ErrorCode::dimension_mismatch, "adjacency does not match state size");
    }
    const auto& nb = cfg.neighbors[i];
    if (nb.empty()) return x;
    j = nb[uniform_index(rng, nb.size())];
  } else {
    j = uniform_index(rng, x.size() - 1);
    if (j >= i) ++j;
  }
  bc_interact(x, i, j, cfg.epsilon, cfg.mu);
  return x;
}

/// Stateful driver holding the seeded stream for a BcConfig.
class BoundedConfidence {
 public:
  explicit BoundedConfidence(BcConfig cfg)
      : cfg_(std::move(cfg)), rng_(derive_seed(cfg_.rng_seed, {0xbc})), state_(cfg_.opinions) {
    cfg_.validate();
  }

  const std::vector<double>& state() const { return state_; }
  std::size_t steps() const { return steps_; }

  void step() {
    state_ = bc_step(state_, cfg_, rng_);
    ++steps_;
  }

  /// Runs up to `n` further steps, never beyond max_steps.
  void run(std::size_t n) {
    for (std::size_t k = 0; k < n && steps_ < cfg_.max_steps; ++k) step();
  }

 private:
  BcConfig cfg_;
  Rng rng_;
  std::vector<double> state_;
  std::size_t steps_ = 0;
};

inline double stance_to_unit(int z) { return (static_cast<double>(z) + 1.0) / 2.0; }
inline double unit_to_signed(double x) { return 2.0 * x - 1.0; }

/// Thirds of [0, 1] map to -1, 0, +1.
inline int unit_to_stance(double x) {
  if (x < 1.0 / 3.0) return -1;
  if (x > 2.0 / 3.0) return 1;
  return 0;
}

/// FJ trajectory z_0 = s, z_{k+1} = fj_step(z_k) scored like an experiment run.
inline MetricsSeries fj_series(const GridTopology& topo, std::span<const int> seed_stances, double susceptibility,
                               int iterations) {
  FjConfig cfg;
  cfg.innate.assign(seed_stances.begin(), seed_stances.end());
  cfg.neighbors = topo.adjacency();
  cfg.susceptibility = susceptibility;
  cfg.validate();
  MetricsSeries series;
  series.model = "fj";
  std::vector<double> z = cfg.innate;
  for (int k = 0; k <= iterations; ++k) {
    series.records.push_back(metrics_record(k, std::span<const double>(z), topo));
    z = fj_step(z, cfg);
  }
  return series;
}

/// Deffuant trajectory on the lattice; one "iteration" is N interaction steps.
/// Opinions are scored on the signed scale 2x - 1.
inline MetricsSeries bc_series(const GridTopology& topo, std::span<const int> seed_stances, double epsilon, double mu,
                               std::uint64_t seed, int iterations, Pairing pairing = Pairing::lattice_neighbor) {
  BcConfig cfg;
  for (int z : seed_stances) cfg.opinions.push_back(stance_to_unit(z));
  cfg.epsilon = epsilon;
  cfg.mu = mu;
  cfg.pairing = pairing;
  cfg.rng_seed = seed;
  cfg.neighbors = topo.adjacency();
  cfg.max_steps = static_cast<std::size_t>(iterations) * topo.size();
  BoundedConfidence model(cfg);
  MetricsSeries series;
  series.model = "bc";
  for (int k = 0; k <= iterations; ++k) {
    std::vector<double> signed_x;
    for (double x : model.state()) signed_x.push_back(unit_to_signed(x));
    series.records.push_back(metrics_record(k, std::span<const double>(signed_x), topo));
    model.run(topo.size());
  }
  return series;
}

}  // namespace hybridnet::baselines
