#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <string>
#include <vector>

#include "hybridnet/error.hpp"

namespace hybridnet {

struct NodeId {
  int row = 0;
  int col = 0;

  friend constexpr auto operator<=>(const NodeId&, const NodeId&) = default;
};

inline std::string to_string(NodeId v) {
  return "(" + std::to_string(v.row) + "," + std::to_string(v.col) + ")";
}

/// A reference to a node's statement one iteration back.
struct ObservationRef {
  NodeId node;
  int iteration_offset = -1;

  friend constexpr bool operator==(const ObservationRef&, const ObservationRef&) = default;
};

/// Open (non-toroidal) rows x cols lattice. Nodes are numbered row-major.
class GridTopology {
 public:
  GridTopology() = default;
  GridTopology(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) {
      throw Error(ErrorCode::config, "grid dimensions must be positive, got " +
                                         std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(rows_) * cols_; }

  bool contains(NodeId v) const noexcept {
    return v.row >= 0 && v.row < rows_ && v.col >= 0 && v.col < cols_;
  }

  std::size_t index(NodeId v) const {
    require(v);
    return static_cast<std::size_t>(v.row) * cols_ + v.col;
  }

  NodeId node(std::size_t index) const {
    if (index >= size()) throw Error(ErrorCode::invalid_node, "node index " + std::to_string(index));
    return {static_cast<int>(index / cols_), static_cast<int>(index % cols_)};
  }

  /// Spatial neighbours at Manhattan distance 1, ordered up, down, left, right.
  std::vector<NodeId> lattice_neighbors(NodeId v) const {
    require(v);
    static constexpr std::array<std::array<int, 2>, 4> kSteps{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
    std::vector<NodeId> out;
    out.reserve(4);
    for (auto [dr, dc] : kSteps) {
      NodeId u{v.row + dr, v.col + dc};
      if (contains(u)) out.push_back(u);
    }
    return out;
  }

  /// The node itself first, then its lattice neighbours; all one iteration back.
  std::vector<ObservationRef> observation_set(NodeId v) const {
    auto neighbors = lattice_neighbors(v);
    std::vector<ObservationRef> out;
    out.reserve(neighbors.size() + 1);
    out.push_back({v, -1});
    for (auto u : neighbors) out.push_back({u, -1});
    return out;
  }

  /// Neighbour lists by row-major index.
  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(size());
    for (std::size_t i = 0; i < size(); ++i) {
      for (auto u : lattice_neighbors(node(i))) adj[i].push_back(index(u));
    }
    return adj;
  }

 private:
  void require(NodeId v) const {
    if (!contains(v)) {
      throw Error(ErrorCode::invalid_node, to_string(v) + " outside " + std::to_string(rows_) +
                                               "x" + std::to_string(cols_) + " grid");
    }
  }

  int rows_ = 5;
  int cols_ = 5;
};

}  // namespace hybridnet
