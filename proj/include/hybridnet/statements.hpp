#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hybridnet/error.hpp"
#include "hybridnet/random.hpp"
#include "hybridnet/text.hpp"
#include "hybridnet/topology.hpp"

namespace hybridnet {

enum class Stance : int { negative = -1, neutral = 0, positive = 1 };

constexpr int value(Stance s) { return static_cast<int>(s); }

constexpr std::string_view to_string(Stance s) {
  switch (s) {
    case Stance::negative: return "negative";
    case Stance::neutral: return "neutral";
    case Stance::positive: return "positive";
  }
  return "neutral";
}

inline std::optional<Stance> parse_stance(std::string_view s) {
  auto lower = text::to_lower(text::trim(s));
  if (lower == "positive" || lower == "+1" || lower == "1") return Stance::positive;
  if (lower == "negative" || lower == "-1") return Stance::negative;
  if (lower == "neutral" || lower == "0") return Stance::neutral;
  return std::nullopt;
}

struct Statement {
  std::string id;
  std::string text;
  std::optional<Stance> seed_stance;  // set for pool statements only
};

struct StatementPool {
  std::string question;
  std::vector<Statement> statements;

  const Statement& at(std::string_view id) const {
    auto it = std::find_if(statements.begin(), statements.end(),
                           [&](const Statement& s) { return s.id == id; });
    if (it == statements.end()) throw Error(ErrorCode::not_found, "statement id " + std::string(id));
    return *it;
  }

  std::size_t count(Stance stance) const {
    return static_cast<std::size_t>(std::count_if(statements.begin(), statements.end(),
                                                  [&](const Statement& s) { return s.seed_stance == stance; }));
  }
};

/// Parses and validates a pool document:
/// {"question": str, "statements": [{"id": str, "text": str, "stance": "positive"|"negative"}]}
inline StatementPool pool_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("question") || !doc["question"].is_string() ||
      !doc.contains("statements") || !doc["statements"].is_array()) {
    throw Error(ErrorCode::parse, "pool must be an object with a string 'question' and an array 'statements'");
  }
  StatementPool pool;
  pool.question = doc["question"].get<std::string>();
  if (text::trim(pool.question).empty()) throw Error(ErrorCode::validation, "pool question is empty");

  std::set<std::string> seen;
  for (const auto& item : doc["statements"]) {
    if (!item.is_object() || !item.contains("id") || !item["id"].is_string() || !item.contains("text") ||
        !item["text"].is_string() || !item.contains("stance") || !item["stance"].is_string()) {
      throw Error(ErrorCode::parse, "each statement needs string fields id, text, stance");
    }
    Statement s{item["id"].get<std::string>(), item["text"].get<std::string>(), std::nullopt};
    auto stance = parse_stance(item["stance"].get<std::string>());
    if (!stance || *stance == Stance::neutral) {
      throw Error(ErrorCode::validation, "statement " + s.id + ": stance must be positive or negative");
    }
    s.seed_stance = stance;
    if (s.id.empty()) throw Error(ErrorCode::validation, "statement with empty id");
    if (text::trim(s.text).empty()) throw Error(ErrorCode::validation, "statement " + s.id + " has empty text");
    if (!seen.insert(s.id).second) throw Error(ErrorCode::duplicate_id, "duplicate statement id " + s.id);
    pool.statements.push_back(std::move(s));
  }
  if (pool.statements.empty()) throw Error(ErrorCode::validation, "pool has no statements");

  auto pos = pool.count(Stance::positive);
  auto neg = pool.count(Stance::negative);
  if (pos != neg) {
    throw Error(ErrorCode::stance_imbalance, "pool has " + std::to_string(pos) + " positive and " +
                                                 std::to_string(neg) + " negative statements");
  }
  return pool;
}

inline nlohmann::json to_json(const StatementPool& pool) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& s : pool.statements) {
    items.push_back({{"id", s.id}, {"text", s.text}, {"stance", to_string(s.seed_stance.value_or(Stance::neutral))}});
  }
  return {{"question", pool.question}, {"statements", items}};
}

inline StatementPool load_pool(std::istream& source) {
  std::string content{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
  if (text::trim(content).empty()) throw Error(ErrorCode::parse, "pool source is empty");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse, e.what());
  }
  return pool_from_json(doc);
}

inline StatementPool load_pool_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open pool file " + path);
  return load_pool(in);
}

/// Requested stance counts for the seeded iteration.
struct Imbalance {
  int positive = 14;
  int negative = 11;

  friend bool operator==(const Imbalance&, const Imbalance&) = default;
};

/// Iteration-0 assignment, row-major by node index.
struct SeedLayout {
  std::vector<std::string> assignment;
  std::vector<Stance> stances;
  int positive_count = 0;
  int negative_count = 0;
};

/// Places `imbalance.positive` positive statements on the first nodes in
/// row-major order and negative statements on the rest, then assigns concrete
/// statements so that no two lattice neighbours share an id. Statements are
/// drawn in seeded random order, unused ones first; the search backtracks and
/// gives up after `max_steps` placements.
inline SeedLayout seed_layout(const StatementPool& pool, const GridTopology& topo, Imbalance imbalance,
                              std::uint64_t rng_seed, std::size_t max_steps = 10'000) {
  const auto n = topo.size();
  if (imbalance.positive < 0 || imbalance.negative < 0 ||
      static_cast<std::size_t>(imbalance.positive + imbalance.negative) != n) {
    throw Error(ErrorCode::config, "imbalance " + std::to_string(imbalance.positive) + "/" +
                                       std::to_string(imbalance.negative) + " does not sum to " +
                                       std::to_string(n) + " nodes");
  }

  SeedLayout layout;
  layout.assignment.assign(n, {});
  layout.stances.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    layout.stances[i] = i < static_cast<std::size_t>(imbalance.positive) ? Stance::positive : Stance::negative;
  }
  layout.positive_count = imbalance.positive;
  layout.negative_count = imbalance.negative;

  std::map<Stance, std::vector<std::size_t>> by_stance;
  for (std::size_t k = 0; k < pool.statements.size(); ++k) {
    if (pool.statements[k].seed_stance) by_stance[*pool.statements[k].seed_stance].push_back(k);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (by_stance[layout.stances[i]].empty()) {
      throw Error(ErrorCode::infeasible, "pool has no " + std::string(to_string(layout.stances[i])) + " statements");
    }
  }

  const auto adjacency = topo.adjacency();
  Rng rng(derive_seed(rng_seed, {0x5eed}));
  std::vector<std::size_t> chosen(n, 0);
  std::vector<std::size_t> use_count(pool.statements.size(), 0);
  // Per-node candidate order, fixed on first visit so backtracking resumes it.
  std::vector<std::vector<std::size_t>> candidates(n);
  std::vector<std::size_t> cursor(n, 0);
  std::size_t steps = 0;

  auto conflicts = [&](std::size_t node, std::size_t stmt) {
    for (auto u : adjacency[node]) {
      if (u < node && chosen[u] == stmt) return true;
    }
    return false;
  };

  std::size_t node = 0;
  while (node < n) {
    if (cursor[node] == 0 && candidates[node].empty()) {
      auto list = by_stance[layout.stances[node]];
      shuffle(std::span<std::size_t>(list), rng);
      std::stable_partition(list.begin(), list.end(), [&](std::size_t k) { return use_count[k] == 0; });
      candidates[node] = std::move(list);
    }
    bool placed = false;
    while (cursor[node] < candidates[node].size()) {
      auto stmt = candidates[node][cursor[node]++];
      if (++steps > max_steps) {
        throw Error(ErrorCode::infeasible, "no adjacency-distinct layout found within " +
                                               std::to_string(max_steps) + " steps");
      }
      if (!conflicts(node, stmt)) {
        chosen[node] = stmt;
        ++use_count[stmt];
        placed = true;
        break;
      }
    }
    if (placed) {
      ++node;
      continue;
    }
    // Exhausted this node: reset it and undo the previous placement.
    candidates[node].clear();
    cursor[node] = 0;
    if (node == 0) throw Error(ErrorCode::infeasible, "no adjacency-distinct layout exists for this pool");
    --node;
    --use_count[chosen[node]];
  }

  for (std::size_t i = 0; i < n; ++i) layout.assignment[i] = pool.statements[chosen[i]].id;
  return layout;
}

}  // namespace hybridnet
