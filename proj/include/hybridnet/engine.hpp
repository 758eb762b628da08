#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hybridnet/agents.hpp"
#include "hybridnet/config.hpp"
#include "hybridnet/error.hpp"
#include "hybridnet/random.hpp"
#include "hybridnet/statements.hpp"
#include "hybridnet/text.hpp"
#include "hybridnet/topology.hpp"
#include "hybridnet/transcript.hpp"

namespace hybridnet {

/// Milliseconds; wall-clock epoch time unless a test clock is injected.
using Clock = std::function<std::int64_t()>;

inline Clock wall_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

/// Returns start+1, start+2, ... on successive calls. Event times then depend
/// only on event order, which makes scripted transcripts reproducible.
inline Clock logical_clock(std::int64_t start = 0) {
  auto counter = std::make_shared<std::atomic<std::int64_t>>(start);
  return [counter] { return counter->fetch_add(1) + 1; };
}

/// Settable clock for timer tests.
class ManualClock {
 public:
  explicit ManualClock(std::int64_t start = 0) : now_(std::make_shared<std::atomic<std::int64_t>>(start)) {}
  std::int64_t now() const { return now_->load(); }
  void set(std::int64_t t) { now_->store(t); }
  void advance(std::int64_t ms) { now_->fetch_add(ms); }
  Clock clock() const {
    return [now = now_] { return now->load(); };
  }

 private:
  std::shared_ptr<std::atomic<std::int64_t>> now_;
};

/// A dispatched unit of work as handed to an agent. Carries statement texts
/// only; who wrote them is never exposed.
struct Task {
  SlotKey slot;
  std::string question;
  std::vector<std::string> observed;

  std::uint64_t slot_key() const {
    return (static_cast<std::uint64_t>(slot.iteration) << 32) ^
           (static_cast<std::uint64_t>(slot.node.row) << 16) ^ static_cast<std::uint64_t>(slot.node.col);
  }

  TaskContext context() const { return {question, observed, slot_key()}; }
};

inline nlohmann::json to_json(const Task& t) {
  return {{"node", {t.slot.node.row, t.slot.node.col}},
          {"iteration", t.slot.iteration},
          {"question", t.question},
          {"statements", t.observed}};
}

struct ChoiceAck {
  std::int64_t chosen_at = 0;
  std::int64_t revision_not_before = 0;
};

struct CommitResult {
  std::int64_t committed_at = 0;
  std::vector<SlotKey> newly_ready;
  bool run_complete = false;
};

struct SlotCounts {
  std::size_t blocked = 0;
  std::size_t ready = 0;
  std::size_t dispatched = 0;
  std::size_t committed = 0;

  std::size_t total() const { return blocked + ready + dispatched + committed; }
  friend bool operator==(const SlotCounts&, const SlotCounts&) = default;
};

/// Shared state of one experiment run.
///
/// Node-slot (v, t) becomes ready once every slot of its observation set at
/// t-1 is committed; iteration 0 is the seeded layout. All public operations
/// are linearizable: each takes the state lock, validates, appends one event
/// and applies it. Nothing here performs agent I/O.
class RunState {
 public:
  using Listener = std::function<void(const Event&)>;

  RunState(RunConfig config, StatementPool pool, Clock clock = wall_clock(), std::string run_id = {})
      : config_(std::move(config)),
        pool_(std::move(pool)),
        topo_(config_.rows, config_.cols),
        clock_(std::move(clock)),
        run_id_(std::move(run_id)) {
    config_.validate();
    layout_ = seed_layout(pool_, topo_, config_.imbalance, config_.seed);
    build_slots();
    std::lock_guard lock(mu_);
    Event e;
    e.type = EventType::created;
    e.time_ms = clock_();
    e.detail = created_detail();
    apply(std::move(e));
  }

  /// Rebuilds a run from its persisted log. The log must start with the
  /// `created` event of a run with the same config and pool.
  static std::unique_ptr<RunState> replay(RunConfig config, StatementPool pool, std::span<const Event> events,
                                     Clock clock, std::string run_id = {}) {
    if (events.empty() || events.front().type != EventType::created) {
      throw Error(ErrorCode::parse, "event log does not start with a created event");
    }
    std::unique_ptr<RunState> run(new RunState(std::move(config), std::move(pool), std::move(clock), std::move(run_id), ReplayTag{}));
    std::lock_guard lock(run->mu_);
    if (events.front().detail != run->created_detail()) {
      throw Error(ErrorCode::parse, "event log was produced by a different config or pool");
    }
    for (const auto& e : events) {
      if (e.seq != run->events_.size()) {
        throw Error(ErrorCode::parse, "event log gap at seq " + std::to_string(run->events_.size()));
      }
      run->check_replayable(e);
      run->apply(e);
    }
    run->replaying_ = false;
    return run;
  }

  void set_listener(Listener listener) {
    std::lock_guard lock(mu_);
    listener_ = std::move(listener);
  }

  const RunConfig& config() const { return config_; }
  const GridTopology& topology() const { return topo_; }
  const SeedLayout& layout() const { return layout_; }
  const StatementPool& pool() const { return pool_; }
  const std::string& question() const { return pool_.question; }
  const std::string& run_id() const { return run_id_; }
  std::int64_t now() const { return clock_(); }

  AgentKind backend(SlotKey k) const { return slots_[slot_index(k)].backend; }

  /// Claims the first ready slot (lowest iteration, then row-major) whose
  /// backend is `kind`. Returns nullopt when none is ready or the participant
  /// has used up their slot allowance.
  std::optional<Task> next_task(AgentKind kind, std::string agent_id) {
    std::lock_guard lock(mu_);
    if (committed_ == slots_.size()) throw Error(ErrorCode::run_finished, "all slots are committed");
    auto& ready = ready_[static_cast<std::size_t>(kind)];
    if (ready.empty()) return std::nullopt;
    if (kind == AgentKind::human && config_.max_slots_per_participant > 0) {
      auto it = participant_slots_.find(agent_id);
      if (it != participant_slots_.end() && it->second >= config_.max_slots_per_participant) return std::nullopt;
    }
    const auto idx = *ready.begin();
    Event e;
    e.type = EventType::dispatched;
    e.time_ms = clock_();
    e.slot = slots_[idx].key;
    e.agent = std::move(agent_id);
    e.agent_kind = kind;
    apply(std::move(e));
    return make_task(idx);
  }

  /// Records the caller's choice among the observed statements.
  ChoiceAck submit_choice(SlotKey k, std::string_view agent, int index) {
    std::lock_guard lock(mu_);
    const auto idx = slot_index(k);
    const auto& s = slots_[idx];
    require_dispatched_to(s, agent);
    if (s.chosen_index) throw Error(ErrorCode::wrong_state, "choice already submitted for " + to_string(k));
    const auto observed = topo_.observation_set(k.node).size();
    if (index < 0 || static_cast<std::size_t>(index) >= observed) {
      throw Error(ErrorCode::out_of_range, "choice " + std::to_string(index) + " outside 0.." +
                                               std::to_string(observed - 1));
    }
    Event e;
    e.type = EventType::chose;
    e.time_ms = clock_();
    e.slot = k;
    e.agent = std::string(agent);
    e.index = index;
    const auto t = e.time_ms;
    apply(std::move(e));
    return {t, t + display_ms(s)};
  }

  /// Commits the revised statement; unblocks dependants.
  CommitResult submit_revision(SlotKey k, std::string_view agent, std::string text) {
    std::lock_guard lock(mu_);
    const auto idx = slot_index(k);
    const auto& s = slots_[idx];
    require_dispatched_to(s, agent);
    if (!s.chosen_index) throw Error(ErrorCode::wrong_state, "revision before choice for " + to_string(k));
    const auto now = clock_();
    if (now < *s.choice_time + display_ms(s)) {
      throw Error(ErrorCode::too_early, "revision accepted from t=" + std::to_string(*s.choice_time + display_ms(s)) +
                                            ", now " + std::to_string(now));
    }
    text = text::trim(text);
    if (text::word_count(text) < static_cast<std::size_t>(config_.min_words)) {
      throw Error(ErrorCode::too_short, "revision has " + std::to_string(text::word_count(text)) +
                                            " words, minimum is " + std::to_string(config_.min_words));
    }
    Event e;
    e.type = EventType::committed;
    e.time_ms = now;
    e.slot = k;
    e.agent = std::string(agent);
    e.text = std::move(text);
    auto newly = apply(std::move(e));
    return {now, std::move(newly), committed_ == slots_.size()};
  }

  /// Returns an expired dispatched slot to the ready pool, discarding any choice.
  void release_timeout(SlotKey k, std::int64_t now) {
    std::lock_guard lock(mu_);
    const auto& s = slots_[slot_index(k)];
    if (s.status != SlotStatus::dispatched) {
      throw Error(ErrorCode::wrong_state, to_string(k) + " is " + std::string(to_string(s.status)) + ", not dispatched");
    }
    if (now < deadline(s)) {
      throw Error(ErrorCode::wrong_state, to_string(k) + " has not reached its deadline");
    }
    release_locked(k, now, "timeout");
  }

  /// Releases every dispatched slot (of `kind`, if given) whose deadline is
  /// at or before `now`.
  std::vector<SlotKey> release_expired(std::int64_t now, std::optional<AgentKind> kind = std::nullopt) {
    std::lock_guard lock(mu_);
    std::vector<SlotKey> out;
    for (const auto& s : slots_) {
      if (kind && s.backend != *kind) continue;
      if (s.status == SlotStatus::dispatched && now >= deadline(s)) out.push_back(s.key);
    }
    for (auto k : out) release_locked(k, now, "timeout");
    return out;
  }

  /// Returns a dispatched slot to the pool at the holder's request (e.g. an
  /// agent error).
  void abandon(SlotKey k, std::string_view agent, std::string reason) {
    std::lock_guard lock(mu_);
    require_dispatched_to(slots_[slot_index(k)], agent);
    release_locked(k, clock_(), std::move(reason));
  }

  /// Appends an informational event (token lifecycle, visibility loss, ...).
  void note(std::optional<SlotKey> k, std::string agent, std::string detail, std::string payload = {}) {
    std::lock_guard lock(mu_);
    if (k) slot_index(*k);
    Event e;
    e.type = EventType::note;
    e.time_ms = clock_();
    e.slot = k;
    e.agent = std::move(agent);
    e.detail = std::move(detail);
    e.text = std::move(payload);
    apply(std::move(e));
  }

  bool finished() const {
    std::lock_guard lock(mu_);
    return committed_ == slots_.size();
  }

  SlotCounts counts() const {
    std::lock_guard lock(mu_);
    SlotCounts c;
    for (const auto& s : slots_) {
      switch (s.status) {
        case SlotStatus::blocked: ++c.blocked; break;
        case SlotStatus::ready: ++c.ready; break;
        case SlotStatus::dispatched: ++c.dispatched; break;
        case SlotStatus::committed: ++c.committed; break;
      }
    }
    return c;
  }

  SlotStatus status(SlotKey k) const {
    std::lock_guard lock(mu_);
    return slots_[slot_index(k)].status;
  }

  std::vector<SlotKey> slots_with_status(SlotStatus st) const {
    std::lock_guard lock(mu_);
    std::vector<SlotKey> out;
    for (const auto& s : slots_) {
      if (s.status == st) out.push_back(s.key);
    }
    return out;
  }

  bool has_ready(AgentKind kind) const {
    std::lock_guard lock(mu_);
    return !ready_[static_cast<std::size_t>(kind)].empty();
  }

  bool has_slots_of(AgentKind kind) const {
    for (const auto& s : slots_) {
      if (s.backend == kind) return true;
    }
    return false;
  }

  /// Blocks until a slot of `kind` is ready or the run finishes, at most `timeout`.
  bool wait_for_work(AgentKind kind, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] {
      return committed_ == slots_.size() || !ready_[static_cast<std::size_t>(kind)].empty();
    });
  }

  std::size_t event_count() const {
    std::lock_guard lock(mu_);
    return events_.size();
  }

  std::vector<Event> events() const {
    std::lock_guard lock(mu_);
    return events_;
  }

  /// Consistent snapshot of the whole run.
  Transcript transcript() const {
    std::lock_guard lock(mu_);
    Transcript t;
    t.run_id = run_id_;
    t.config = config_;
    t.question = pool_.question;
    for (std::size_t i = 0; i < topo_.size(); ++i) {
      const auto& st = pool_.at(layout_.assignment[i]);
      t.seed.push_back({topo_.node(i), st.id, st.text, layout_.stances[i]});
    }
    for (const auto& s : slots_) {
      SlotRecord r;
      r.key = s.key;
      r.backend = s.backend;
      r.status = s.status;
      r.agent = s.agent;
      r.chosen_index = s.chosen_index;
      r.text = s.revised;
      r.commit_time = s.commit_time;
      t.slots.push_back(std::move(r));
    }
    t.events = events_;
    return t;
  }

 private:
  struct ReplayTag {};

  struct NodeSlot {
    SlotKey key;
    AgentKind backend = AgentKind::scripted;
    SlotStatus status = SlotStatus::blocked;
    std::string agent;
    std::optional<int> chosen_index;
    std::optional<std::string> revised;
    std::optional<std::int64_t> dispatch_time;
    std::optional<std::int64_t> choice_time;
    std::optional<std::int64_t> commit_time;
  };

  RunState(RunConfig config, StatementPool pool, Clock clock, std::string run_id, ReplayTag)
      : config_(std::move(config)),
        pool_(std::move(pool)),
        topo_(config_.rows, config_.cols),
        clock_(std::move(clock)),
        run_id_(std::move(run_id)),
        replaying_(true) {
    config_.validate();
    layout_ = seed_layout(pool_, topo_, config_.imbalance, config_.seed);
    build_slots();
  }

  void build_slots() {
    const auto n = topo_.size();
    const auto total = config_.slot_count();
    slots_.resize(total);
    pending_.assign(total, 0);
    std::vector<AgentKind> kinds(total, config_.ai_backend);
    if (config_.condition == Condition::human_only) {
      kinds.assign(total, AgentKind::human);
    } else if (config_.condition == Condition::hybrid) {
      // Exactly round(ratio * slots) human slots, positions drawn per slot.
      auto humans = static_cast<std::size_t>(std::llround(config_.hybrid_ratio * static_cast<double>(total)));
      std::vector<std::size_t> order(total);
      for (std::size_t i = 0; i < total; ++i) order[i] = i;
      Rng rng(derive_seed(config_.seed, {0x4b1d}));
      shuffle(std::span<std::size_t>(order), rng);
      for (std::size_t i = 0; i < humans; ++i) kinds[order[i]] = AgentKind::human;
    }
    for (std::size_t i = 0; i < total; ++i) {
      auto& s = slots_[i];
      s.key = {topo_.node(i % n), static_cast<int>(i / n) + 1};
      s.backend = kinds[i];
      if (s.key.iteration == 1) {
        s.status = SlotStatus::ready;
        ready_[static_cast<std::size_t>(s.backend)].insert(i);
      } else {
        pending_[i] = static_cast<int>(topo_.observation_set(s.key.node).size());
      }
    }
  }

  std::string created_detail() const {
    std::size_t humans = 0;
    for (const auto& s : slots_) humans += s.backend == AgentKind::human;
    return nlohmann::json{{"layout", layout_.assignment}, {"human_slots", humans}}.dump();
  }

  std::size_t slot_index(SlotKey k) const {
    if (!topo_.contains(k.node) || k.iteration < 1 || k.iteration > config_.iterations) {
      throw Error(ErrorCode::invalid_node, "no slot " + to_string(k));
    }
    return static_cast<std::size_t>(k.iteration - 1) * topo_.size() + topo_.index(k.node);
  }

  std::int64_t display_ms(const NodeSlot& s) const {
    return s.backend == AgentKind::human ? static_cast<std::int64_t>(config_.display_seconds) * 1000 : 0;
  }

  std::int64_t deadline(const NodeSlot& s) const {
    return *s.dispatch_time + static_cast<std::int64_t>(config_.timeout_seconds) * 1000;
  }

  static void require_dispatched_to(const NodeSlot& s, std::string_view agent) {
    if (s.status != SlotStatus::dispatched) {
      throw Error(ErrorCode::wrong_state, to_string(s.key) + " is " + std::string(to_string(s.status)) +
                                              ", not dispatched");
    }
    if (s.agent != agent) throw Error(ErrorCode::wrong_state, to_string(s.key) + " is held by another agent");
  }

  const std::string& statement_text(NodeId v, int iteration) const {
    if (iteration == 0) return pool_.at(layout_.assignment[topo_.index(v)]).text;
    return *slots_[slot_index({v, iteration})].revised;
  }

  Task make_task(std::size_t idx) const {
    const auto& s = slots_[idx];
    Task t{s.key, pool_.question, {}};
    for (const auto& ref : topo_.observation_set(s.key.node)) {
      t.observed.push_back(statement_text(ref.node, s.key.iteration + ref.iteration_offset));
    }
    return t;
  }

  void release_locked(SlotKey k, std::int64_t now, std::string reason) {
    Event e;
    e.type = EventType::released;
    e.time_ms = now;
    e.slot = k;
    e.agent = slots_[slot_index(k)].agent;
    e.detail = std::move(reason);
    apply(std::move(e));
  }

  /// Pre-state checks for replayed events; the live operations have already
  /// validated their own.
  void check_replayable(const Event& e) const {
    if (e.type == EventType::created || e.type == EventType::note) return;
    if (!e.slot) throw Error(ErrorCode::parse, "event " + std::to_string(e.seq) + " lacks a slot");
    const auto& s = slots_[slot_index(*e.slot)];
    auto expect = [&](SlotStatus st) {
      if (s.status != st) {
        throw Error(ErrorCode::parse, "event " + std::to_string(e.seq) + " (" + std::string(to_string(e.type)) +
                                          ") found slot " + to_string(s.key) + " " +
                                          std::string(to_string(s.status)));
      }
    };
    switch (e.type) {
      case EventType::dispatched: expect(SlotStatus::ready); break;
      case EventType::chose:
      case EventType::committed:
      case EventType::released: expect(SlotStatus::dispatched); break;
      default: break;
    }
  }

  /// Applies one event to the state and appends it to the log.
  std::vector<SlotKey> apply(Event e) {
    std::vector<SlotKey> newly_ready;
    if (e.slot) {
      const auto idx = slot_index(*e.slot);
      auto& s = slots_[idx];
      auto& ready = ready_[static_cast<std::size_t>(s.backend)];
      switch (e.type) {
        case EventType::dispatched:
          ready.erase(idx);
          s.status = SlotStatus::dispatched;
          s.agent = e.agent;
          s.dispatch_time = e.time_ms;
          s.chosen_index.reset();
          s.choice_time.reset();
          if (s.backend == AgentKind::human) ++participant_slots_[e.agent];
          break;
        case EventType::chose:
          s.chosen_index = e.index;
          s.choice_time = e.time_ms;
          break;
        case EventType::committed: {
          s.status = SlotStatus::committed;
          s.revised = e.text;
          s.commit_time = e.time_ms;
          ++committed_;
          if (s.key.iteration < config_.iterations) {
            // v observes u at t-1 iff v is u or a lattice neighbour of u.
            std::vector<NodeId> dependants = topo_.lattice_neighbors(s.key.node);
            dependants.push_back(s.key.node);
            for (auto v : dependants) {
              const auto didx = slot_index({v, s.key.iteration + 1});
              if (--pending_[didx] == 0) {
                auto& d = slots_[didx];
                d.status = SlotStatus::ready;
                ready_[static_cast<std::size_t>(d.backend)].insert(didx);
                newly_ready.push_back(d.key);
              }
            }
          }
          break;
        }
        case EventType::released:
          s.status = SlotStatus::ready;
          s.agent.clear();
          s.chosen_index.reset();
          s.choice_time.reset();
          s.dispatch_time.reset();
          ready.insert(idx);
          break;
        default: break;
      }
    }
    if (!replaying_) e.seq = events_.size();
    events_.push_back(e);
    if (listener_ && !replaying_) listener_(events_.back());
    cv_.notify_all();
    return newly_ready;
  }

  RunConfig config_;
  StatementPool pool_;
  GridTopology topo_;
  Clock clock_;
  std::string run_id_;
  SeedLayout layout_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<NodeSlot> slots_;
  std::vector<int> pending_;
  std::array<std::set<std::size_t>, 3> ready_;
  std::map<std::string, int> participant_slots_;
  std::size_t committed_ = 0;
  std::vector<Event> events_;
  Listener listener_;
  bool replaying_ = false;
};

}  // namespace hybridnet
