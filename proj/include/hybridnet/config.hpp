#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

#include "hybridnet/agents.hpp"
#include "hybridnet/error.hpp"
#include "hybridnet/llm.hpp"
#include "hybridnet/statements.hpp"

namespace hybridnet {

enum class Condition { human_only, ai_only, hybrid };

constexpr std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::human_only: return "human_only";
    case Condition::ai_only: return "ai_only";
    case Condition::hybrid: return "hybrid";
  }
  return "ai_only";
}

inline Condition parse_condition(std::string_view s) {
  if (s == "human_only") return Condition::human_only;
  if (s == "ai_only") return Condition::ai_only;
  if (s == "hybrid") return Condition::hybrid;
  throw Error(ErrorCode::config, "unknown condition '" + std::string(s) + "'");
}

struct RunConfig {
  int rows = 5;
  int cols = 5;
  int iterations = 8;
  Condition condition = Condition::ai_only;
  /// Fraction of node-slots filled by humans in a hybrid run.
  double hybrid_ratio = 0.5;
  Framing framing = Framing::consensus;
  Imbalance imbalance{};
  std::uint64_t seed = 1;

  /// Backend for the non-human slots: llm or scripted.
  AgentKind ai_backend = AgentKind::llm;
  std::string scripted_policy = "majority-copy";
  std::string model = "x-ai/grok-4-fast";
  double temperature = 1.0;

  int display_seconds = 60;
  int min_words = 5;
  int timeout_seconds = 15 * 60;
  /// Slots one human participant credential may fill per run; 0 = unlimited.
  int max_slots_per_participant = 1;

  std::size_t node_count() const { return static_cast<std::size_t>(rows) * cols; }
  std::size_t slot_count() const { return node_count() * static_cast<std::size_t>(iterations); }

  void validate() const {
    if (rows <= 0 || cols <= 0) throw Error(ErrorCode::config, "grid dimensions must be positive");
    if (iterations < 1) throw Error(ErrorCode::config, "iterations must be >= 1, got " + std::to_string(iterations));
    if (!(hybrid_ratio >= 0.0 && hybrid_ratio <= 1.0)) {
      throw Error(ErrorCode::config, "hybrid_ratio must lie in [0, 1], got " + std::to_string(hybrid_ratio));
    }
    if (imbalance.positive < 0 || imbalance.negative < 0 ||
        static_cast<std::size_t>(imbalance.positive + imbalance.negative) != node_count()) {
      throw Error(ErrorCode::config, "imbalance must split the " + std::to_string(node_count()) + " nodes");
    }
    if (ai_backend == AgentKind::human) throw Error(ErrorCode::config, "ai_backend must be llm or scripted");
    if (ai_backend == AgentKind::scripted) ScriptedAgent::parse_policy(scripted_policy);
    if (display_seconds < 0) throw Error(ErrorCode::config, "display_seconds must be >= 0");
    if (min_words < 1) throw Error(ErrorCode::config, "min_words must be >= 1");
    if (timeout_seconds <= 0) throw Error(ErrorCode::config, "timeout_seconds must be > 0");
    if (max_slots_per_participant < 0) throw Error(ErrorCode::config, "max_slots_per_participant must be >= 0");
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {
      {"rows", c.rows},
      {"cols", c.cols},
      {"iterations", c.iterations},
      {"condition", to_string(c.condition)},
      {"hybrid_ratio", c.hybrid_ratio},
      {"framing", to_string(c.framing)},
      {"imbalance", {{"positive", c.imbalance.positive}, {"negative", c.imbalance.negative}}},
      {"seed", c.seed},
      {"ai_backend", to_string(c.ai_backend)},
      {"scripted_policy", c.scripted_policy},
      {"model", c.model},
      {"temperature", c.temperature},
      {"display_seconds", c.display_seconds},
      {"min_words", c.min_words},
      {"timeout_seconds", c.timeout_seconds},
      {"max_slots_per_participant", c.max_slots_per_participant},
  };
}

/// Missing keys keep their defaults; present keys must have the right type.
/// The result is validated.
inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::config, "run config must be an object");
  RunConfig c;
  try {
    c.rows = j.value("rows", c.rows);
    c.cols = j.value("cols", c.cols);
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("condition")) c.condition = parse_condition(j["condition"].get<std::string>());
    c.hybrid_ratio = j.value("hybrid_ratio", c.hybrid_ratio);
    if (j.contains("framing")) c.framing = parse_framing(j["framing"].get<std::string>());
    if (j.contains("imbalance")) {
      c.imbalance.positive = j["imbalance"].at("positive").get<int>();
      c.imbalance.negative = j["imbalance"].at("negative").get<int>();
    } else if (c.node_count() != 25) {
      // Default split for non-default grids: ceil(N/2) positive.
      auto n = static_cast<int>(c.node_count());
      c.imbalance = {n - n / 2, n / 2};
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("ai_backend")) c.ai_backend = parse_agent_kind(j["ai_backend"].get<std::string>());
    c.scripted_policy = j.value("scripted_policy", c.scripted_policy);
    c.model = j.value("model", c.model);
    c.temperature = j.value("temperature", c.temperature);
    c.display_seconds = j.value("display_seconds", c.display_seconds);
    c.min_words = j.value("min_words", c.min_words);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_slots_per_participant = j.value("max_slots_per_participant", c.max_slots_per_participant);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace hybridnet
