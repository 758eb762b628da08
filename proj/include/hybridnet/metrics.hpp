#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "hybridnet/error.hpp"
#include "hybridnet/topology.hpp"

namespace hybridnet {

/// Expressed opinions in row-major node order, entries in {-1, 0, +1}.
struct OpinionVector {
  std::vector<int> values;
  int iteration = 0;
};

/// Population variance (1/N) of the entries. Integer opinions are summed
/// exactly, so the result is (N*sum(z^2) - sum(z)^2) / N^2 with one rounding.
template <typename T>
double polarization_index(std::span<const T> z) {
  if (z.empty()) throw Error(ErrorCode::empty_input, "polarization of an empty opinion vector");
  if constexpr (std::is_integral_v<T>) {
    long long s = 0, s2 = 0;
    for (auto v : z) {
      s += static_cast<long long>(v);
      s2 += static_cast<long long>(v) * static_cast<long long>(v);
    }
    const auto n = static_cast<long long>(z.size());
    return static_cast<double>(n * s2 - s * s) / static_cast<double>(n * n);
  }
  const double n = static_cast<double>(z.size());
  double mean = 0.0;
  for (auto v : z) mean += static_cast<double>(v);
  mean /= n;
  double ss = 0.0;
  for (auto v : z) {
    const double d = static_cast<double>(v) - mean;
    ss += d * d;
  }
  return ss / n;
}

inline double polarization_index(const OpinionVector& z) {
  return polarization_index(std::span<const int>(z.values));
}

/// Pearson correlation; nullopt when either side has zero variance.
template <typename X, typename Y>
std::optional<double> pearson(std::span<const X> x, std::span<const Y> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::dimension_mismatch, "pearson on vectors of length " + std::to_string(x.size()) +
                                                   " and " + std::to_string(y.size()));
  }
  if (x.empty()) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += static_cast<double>(x[i]);
    my += static_cast<double>(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = static_cast<double>(x[i]) - mx;
    const double dy = static_cast<double>(y[i]) - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  // Rounding can leave a tiny residue on constant inputs; anything this small
  // relative to the entry scale is treated as zero variance.
  constexpr double kZero = 1e-24;
  if (sxx <= kZero * n || syy <= kZero * n) return std::nullopt;
  double r = sxy / std::sqrt(sxx * syy);
  if (r > 1.0) r = 1.0;
  if (r < -1.0) r = -1.0;
  return r;
}

struct NeighborhoodOptions {
  /// Also average in the node's own value (the temporal self-link of the
  /// observation set). Off by default: the index is a same-snapshot measure.
  bool include_self = false;
};

/// n_i: mean opinion of i's lattice neighbours.
template <typename T>
std::vector<double> neighbor_average(std::span<const T> z, const GridTopology& topo,
                                     NeighborhoodOptions opts = {}) {
  if (z.size() != topo.size()) {
    throw Error(ErrorCode::dimension_mismatch, "opinion vector has " + std::to_string(z.size()) +
                                                   " entries for a " + std::to_string(topo.size()) +
                                                   "-node grid");
  }
  std::vector<double> n(z.size(), 0.0);
  const auto adj = topo.adjacency();
  for (std::size_t i = 0; i < z.size(); ++i) {
    double sum = opts.include_self ? static_cast<double>(z[i]) : 0.0;
    std::size_t count = opts.include_self ? 1 : 0;
    for (auto j : adj[i]) {
      sum += static_cast<double>(z[j]);
      ++count;
    }
    // A 1x1 grid has no neighbours; its own value is the only information.
    n[i] = count == 0 ? static_cast<double>(z[i]) : sum / static_cast<double>(count);
  }
  return n;
}

inline std::vector<double> neighbor_average(const OpinionVector& z, const GridTopology& topo,
                                            NeighborhoodOptions opts = {}) {
  return neighbor_average(std::span<const int>(z.values), topo, opts);
}

/// Neighbours Correlation Index: rho(z, n). nullopt is the undefined marker.
template <typename T>
std::optional<double> nci(std::span<const T> z, const GridTopology& topo, NeighborhoodOptions opts = {}) {
  auto n = neighbor_average(z, topo, opts);
  return pearson(z, std::span<const double>(n));
}

inline std::optional<double> nci(const OpinionVector& z, const GridTopology& topo, NeighborhoodOptions opts = {}) {
  return nci(std::span<const int>(z.values), topo, opts);
}

struct MetricsRecord {
  int iteration = 0;
  double polarization = 0.0;
  std::optional<double> nci;
};

struct MetricsSeries {
  std::string model = "experiment";  // experiment | fj | bc
  std::vector<MetricsRecord> records;
};

template <typename T>
MetricsRecord metrics_record(int iteration, std::span<const T> z, const GridTopology& topo,
                             NeighborhoodOptions opts = {}) {
  return {iteration, polarization_index(z), nci(z, topo, opts)};
}

}  // namespace hybridnet
