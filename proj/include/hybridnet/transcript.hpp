#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hybridnet/agents.hpp"
#include "hybridnet/config.hpp"
#include "hybridnet/error.hpp"
#include "hybridnet/statements.hpp"
#include "hybridnet/topology.hpp"

namespace hybridnet {

inline constexpr std::string_view kTranscriptSchema = "hybridnet.transcript/v1";
inline constexpr std::string_view kEventSchema = "hybridnet.event/v1";

struct SlotKey {
  NodeId node;
  int iteration = 1;

  friend constexpr auto operator<=>(const SlotKey&, const SlotKey&) = default;
};

inline std::string to_string(SlotKey k) {
  return to_string(k.node) + "@" + std::to_string(k.iteration);
}

enum class SlotStatus { blocked, ready, dispatched, committed };

constexpr std::string_view to_string(SlotStatus s) {
  switch (s) {
    case SlotStatus::blocked: return "blocked";
    case SlotStatus::ready: return "ready";
    case SlotStatus::dispatched: return "dispatched";
    case SlotStatus::committed: return "committed";
  }
  return "blocked";
}

inline SlotStatus parse_slot_status(std::string_view s) {
  if (s == "blocked") return SlotStatus::blocked;
  if (s == "ready") return SlotStatus::ready;
  if (s == "dispatched") return SlotStatus::dispatched;
  if (s == "committed") return SlotStatus::committed;
  throw Error(ErrorCode::parse, "unknown slot status '" + std::string(s) + "'");
}

enum class EventType { created, dispatched, chose, committed, released, note };

constexpr std::string_view to_string(EventType t) {
  switch (t) {
    case EventType::created: return "created";
    case EventType::dispatched: return "dispatched";
    case EventType::chose: return "chose";
    case EventType::committed: return "committed";
    case EventType::released: return "released";
    case EventType::note: return "note";
  }
  return "note";
}

inline EventType parse_event_type(std::string_view s) {
  for (auto t : {EventType::created, EventType::dispatched, EventType::chose, EventType::committed,
                 EventType::released, EventType::note}) {
    if (to_string(t) == s) return t;
  }
  throw Error(ErrorCode::parse, "unknown event type '" + std::string(s) + "'");
}

/// One entry of the append-only run log.
struct Event {
  std::uint64_t seq = 0;
  std::int64_t time_ms = 0;
  EventType type = EventType::note;
  std::optional<SlotKey> slot;
  std::string agent;
  std::optional<AgentKind> agent_kind;
  std::optional<int> index;
  std::string text;
  std::string detail;

  friend bool operator==(const Event&, const Event&) = default;
};

inline nlohmann::json to_json(const Event& e) {
  nlohmann::json j{{"seq", e.seq}, {"t", e.time_ms}, {"type", to_string(e.type)}};
  if (e.slot) {
    j["node"] = {e.slot->node.row, e.slot->node.col};
    j["iteration"] = e.slot->iteration;
  }
  if (!e.agent.empty()) j["agent"] = e.agent;
  if (e.agent_kind) j["agent_kind"] = to_string(*e.agent_kind);
  if (e.index) j["index"] = *e.index;
  if (!e.text.empty()) j["text"] = e.text;
  if (!e.detail.empty()) j["detail"] = e.detail;
  return j;
}

inline Event event_from_json(const nlohmann::json& j) {
  try {
    Event e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.time_ms = j.at("t").get<std::int64_t>();
    e.type = parse_event_type(j.at("type").get<std::string>());
    if (j.contains("node")) {
      e.slot = SlotKey{{j["node"].at(0).get<int>(), j["node"].at(1).get<int>()}, j.at("iteration").get<int>()};
    }
    e.agent = j.value("agent", "");
    if (j.contains("agent_kind")) e.agent_kind = parse_agent_kind(j["agent_kind"].get<std::string>());
    if (j.contains("index")) e.index = j["index"].get<int>();
    e.text = j.value("text", "");
    e.detail = j.value("detail", "");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::parse, std::string("event: ") + ex.what());
  }
}

struct SeedEntry {
  NodeId node;
  std::string statement_id;
  std::string text;
  Stance stance = Stance::neutral;
};

struct SlotRecord {
  SlotKey key;
  AgentKind backend = AgentKind::scripted;
  SlotStatus status = SlotStatus::blocked;
  std::string agent;
  std::optional<int> chosen_index;
  std::optional<std::string> text;
  std::optional<std::int64_t> commit_time;
};

/// Everything needed to recompute metrics or replay a run.
struct Transcript {
  std::string run_id;
  RunConfig config;
  std::string question;
  std::vector<SeedEntry> seed;      // row-major, one per node
  std::vector<SlotRecord> slots;    // iteration-major, then row-major
  std::vector<Event> events;

  GridTopology topology() const { return {config.rows, config.cols}; }

  const SlotRecord& slot(SlotKey k) const {
    const auto n = config.node_count();
    const auto idx = static_cast<std::size_t>(k.iteration - 1) * n + topology().index(k.node);
    if (k.iteration < 1 || idx >= slots.size()) throw Error(ErrorCode::not_found, "slot " + to_string(k));
    return slots[idx];
  }

  /// Highest t such that every slot of iterations 1..t is committed.
  int completed_iterations() const {
    const auto n = config.node_count();
    int done = 0;
    for (int t = 1; t <= config.iterations; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        auto idx = static_cast<std::size_t>(t - 1) * n + i;
        if (idx >= slots.size() || slots[idx].status != SlotStatus::committed) return done;
      }
      done = t;
    }
    return done;
  }

  bool complete() const { return completed_iterations() == config.iterations; }
};

inline nlohmann::json to_json(const Transcript& t) {
  nlohmann::json seed = nlohmann::json::array();
  for (const auto& s : t.seed) {
    seed.push_back({{"node", {s.node.row, s.node.col}},
                    {"statement_id", s.statement_id},
                    {"text", s.text},
                    {"stance", to_string(s.stance)}});
  }
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : t.slots) {
    nlohmann::json j{{"node", {s.key.node.row, s.key.node.col}},
                     {"iteration", s.key.iteration},
                     {"backend", to_string(s.backend)},
                     {"status", to_string(s.status)}};
    j["agent"] = s.agent.empty() ? nlohmann::json(nullptr) : nlohmann::json(s.agent);
    j["chosen_index"] = s.chosen_index ? nlohmann::json(*s.chosen_index) : nlohmann::json(nullptr);
    j["text"] = s.text ? nlohmann::json(*s.text) : nlohmann::json(nullptr);
    j["commit_time"] = s.commit_time ? nlohmann::json(*s.commit_time) : nlohmann::json(nullptr);
    slots.push_back(std::move(j));
  }
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : t.events) events.push_back(to_json(e));
  return {{"schema", kTranscriptSchema},
          {"run_id", t.run_id},
          {"config", to_json(t.config)},
          {"question", t.question},
          {"seed", seed},
          {"slots", slots},
          {"events", events}};
}

inline Transcript transcript_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("schema", "") != kTranscriptSchema) {
    throw Error(ErrorCode::parse, "not a " + std::string(kTranscriptSchema) + " document");
  }
  try {
    Transcript t;
    t.run_id = j.value("run_id", "");
    t.config = config_from_json(j.at("config"));
    t.question = j.at("question").get<std::string>();
    for (const auto& s : j.at("seed")) {
      auto stance = parse_stance(s.at("stance").get<std::string>());
      if (!stance) throw Error(ErrorCode::parse, "seed entry with bad stance");
      t.seed.push_back({{s.at("node").at(0).get<int>(), s.at("node").at(1).get<int>()},
                        s.at("statement_id").get<std::string>(),
                        s.at("text").get<std::string>(),
                        *stance});
    }
    for (const auto& s : j.at("slots")) {
      SlotRecord r;
      r.key = {{s.at("node").at(0).get<int>(), s.at("node").at(1).get<int>()}, s.at("iteration").get<int>()};
      r.backend = parse_agent_kind(s.at("backend").get<std::string>());
      r.status = parse_slot_status(s.at("status").get<std::string>());
      if (!s.at("agent").is_null()) r.agent = s["agent"].get<std::string>();
      if (!s.at("chosen_index").is_null()) r.chosen_index = s["chosen_index"].get<int>();
      if (!s.at("text").is_null()) r.text = s["text"].get<std::string>();
      if (!s.at("commit_time").is_null()) r.commit_time = s["commit_time"].get<std::int64_t>();
      t.slots.push_back(std::move(r));
    }
    for (const auto& e : j.at("events")) t.events.push_back(event_from_json(e));
    if (t.seed.size() != t.config.node_count()) {
      throw Error(ErrorCode::parse, "transcript seed has " + std::to_string(t.seed.size()) + " entries for " +
                                        std::to_string(t.config.node_count()) + " nodes");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("transcript: ") + e.what());
  }
}

inline Transcript load_transcript_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open transcript " + path);
  try {
    return transcript_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse, std::string("transcript: ") + e.what());
  }
}

inline void save_transcript_file(const Transcript& t, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write transcript " + path);
  out << to_json(t).dump(2) << '\n';
}

}  // namespace hybridnet
