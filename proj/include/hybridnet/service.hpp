#pragma once

#include <atomic>
#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "hybridnet/analysis.hpp"
#include "hybridnet/engine.hpp"
#include "hybridnet/error.hpp"
#include "hybridnet/runner.hpp"
#include "hybridnet/stance.hpp"
#include "hybridnet/statements.hpp"
#include "hybridnet/transcript.hpp"

namespace hybridnet {

inline constexpr std::string_view kRunRecordSchema = "hybridnet.run/v1";
inline constexpr std::string_view kApiPrefix = "/api/v1";

enum class RunStatus { created, running, complete, failed };

constexpr std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::created: return "created";
    case RunStatus::running: return "running";
    case RunStatus::complete: return "complete";
    case RunStatus::failed: return "failed";
  }
  return "failed";
}

/// Status code plus JSON body; a null body means no content.
struct Response {
  int status = 200;
  nlohmann::json body;
};

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::config:
    case ErrorCode::validation:
    case ErrorCode::parse:
    case ErrorCode::stance_imbalance:
    case ErrorCode::duplicate_id:
    case ErrorCode::infeasible: return 400;
    case ErrorCode::auth: return 401;
    case ErrorCode::not_found:
    case ErrorCode::invalid_node: return 404;
    case ErrorCode::wrong_state: return 409;
    case ErrorCode::gone:
    case ErrorCode::run_finished: return 410;
    case ErrorCode::too_short:
    case ErrorCode::out_of_range: return 422;
    case ErrorCode::too_early: return 425;
    case ErrorCode::transport:
    case ErrorCode::unparseable:
    case ErrorCode::label_mismatch: return 502;
    default: return 500;
  }
}

inline Response error_response(const Error& e) {
  return {http_status(e.code()), {{"error", to_string(e.code())}, {"message", e.what()}}};
}

struct ServiceOptions {
  std::filesystem::path data_dir = "hybridnet-data";
  StatementPool pool;
  /// Labels statements for the metrics endpoint.
  std::shared_ptr<Annotator> annotator;
  /// Builds in-process agents for non-human slots.
  AgentFactory agent_factory;
  /// Clock for a run whose last logged event happened at `resume_after`
  /// (0 for a new run).
  std::function<Clock(std::int64_t resume_after)> clock_factory = [](std::int64_t) { return wall_clock(); };
  std::size_t ai_workers = 2;
  bool start_ai_workers = true;
  /// Write a transcript snapshot after this many new events.
  std::size_t snapshot_every = 50;
};

/// Run administration and the participant task protocol.
///
/// Each run lives in <data_dir>/runs/<id>/ as run.json (config and pool),
/// events.jsonl (the append-only log, one event per line) and a periodic
/// transcript.json snapshot. recover() rebuilds every run by replaying its log.
class Service {
 public:
  explicit Service(ServiceOptions opts) : opts_(std::move(opts)), token_rng_(std::random_device{}()) {
    std::filesystem::create_directories(runs_dir());
  }

  ~Service() {
    stop_background();
    std::vector<std::shared_ptr<Entry>> entries;
    {
      std::lock_guard lock(mu_);
      for (auto& [_, e] : runs_) entries.push_back(e);
    }
    for (auto& e : entries) e->workers = {};
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Reloads every persisted run. Runs that were mid-flight resume their
  /// in-process workers.
  void recover() {
    if (!std::filesystem::exists(runs_dir())) return;
    std::vector<std::filesystem::path> dirs;
    for (const auto& d : std::filesystem::directory_iterator(runs_dir())) {
      if (d.is_directory()) dirs.push_back(d.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) recover_run(dir);
  }

  Response create_run(const nlohmann::json& config_json, const std::string& idempotency_key = {}) {
    try {
      auto config = config_from_json(config_json);
      std::lock_guard create_lock(create_mu_);
      if (!idempotency_key.empty()) {
        std::lock_guard lock(mu_);
        if (auto it = idempotency_.find(idempotency_key); it != idempotency_.end()) {
          auto& e = runs_.at(it->second);
          return {200, {{"run_id", e->id}, {"status", to_string(e->status.load())}}};
        }
      }
      std::string id;
      {
        std::lock_guard lock(mu_);
        id = next_run_id();
      }
      auto dir = runs_dir() / id;
      std::filesystem::create_directories(dir);
      auto entry = std::make_shared<Entry>();
      entry->id = id;
      entry->dir = dir;
      entry->idempotency_key = idempotency_key;
      entry->run = std::make_unique<RunState>(config, opts_.pool, opts_.clock_factory(0), id);

      nlohmann::json record{{"schema", kRunRecordSchema},
                            {"run_id", id},
                            {"config", to_json(config)},
                            {"pool", to_json(opts_.pool)},
                            {"idempotency_key", idempotency_key}};
      write_atomically(dir / "run.json", record.dump(2));
      {
        std::ofstream log(dir / "events.jsonl", std::ios::trunc);
        for (const auto& ev : entry->run->events()) log << to_json(ev).dump() << '\n';
      }
      attach(entry);
      entry->status = RunStatus::running;
      {
        std::lock_guard lock(mu_);
        runs_[id] = entry;
        if (!idempotency_key.empty()) idempotency_[idempotency_key] = id;
      }
      start_workers(entry);
      return {201, {{"run_id", id}, {"status", to_string(entry->status.load())}}};
    } catch (const Error& e) {
      return error_response(e);
    }
  }

  Response get_run(const std::string& run_id) {
    auto entry = find(run_id);
    if (!entry) return not_found(run_id);
    auto counts = entry->run->counts();
    // Workers write `error` before publishing the failed status.
    const auto st = entry->status.load();
    return {200,
            {{"run_id", entry->id},
             {"status", to_string(st)},
             {"config", to_json(entry->run->config())},
             {"error", st == RunStatus::failed ? entry->error : std::string()},
             {"slots",
              {{"blocked", counts.blocked},
               {"ready", counts.ready},
               {"dispatched", counts.dispatched},
               {"committed", counts.committed}}},
             {"transcript", (entry->dir / "transcript.json").string()}}};
  }

  /// Hands the participant a ready human slot, or 204 when none is ready.
  Response next_task(const std::string& run_id, std::string participant) {
    auto entry = find(run_id);
    if (!entry) return not_found(run_id);
    auto st = entry->status.load();
    if (st == RunStatus::complete || st == RunStatus::failed) {
      return {410, {{"error", "gone"}, {"message", "run " + run_id + " is " + std::string(to_string(st))}}};
    }
    sweep_run(*entry);
    if (participant.empty()) participant = "anon-" + random_hex(8);
    try {
      auto& run = *entry->run;
      auto task = run.next_task(AgentKind::human, participant);
      if (!task) return {204, nullptr};
      Session s;
      s.token = random_hex(16);
      s.run_id = run_id;
      s.slot = task->slot;
      s.participant = participant;
      s.issued = run.now();
      s.expires = s.issued + static_cast<std::int64_t>(run.config().timeout_seconds) * 1000;
      run.note(task->slot, participant, "token_issued", s.token);
      {
        std::lock_guard lock(mu_);
        sessions_[s.token] = s;
      }
      maybe_snapshot(*entry);
      return {200,
              {{"token", s.token},
               {"question", task->question},
               {"statements", task->observed},
               {"display_seconds", run.config().display_seconds},
               {"min_words", run.config().min_words},
               {"expires_at", s.expires}}};
    } catch (const Error& e) {
      if (e.code() == ErrorCode::run_finished) {
        return {410, {{"error", "gone"}, {"message", e.what()}}};
      }
      return error_response(e);
    }
  }

  Response submit_choice(const std::string& token, const nlohmann::json& body) {
    auto session = lookup(token);
    if (!session) return invalid_token();
    auto entry = find(session->run_id);
    if (!entry) return invalid_token();
    if (!body.is_object() || !body.contains("index") || !body["index"].is_number_integer()) {
      return {400, {{"error", "validation"}, {"message", "body must carry an integer 'index'"}}};
    }
    try {
      auto ack = entry->run->submit_choice(session->slot, session->participant, body["index"].get<int>());
      maybe_snapshot(*entry);
      return {200,
              {{"chosen_at", ack.chosen_at},
               {"revision_not_before", ack.revision_not_before},
               {"display_seconds", entry->run->config().display_seconds}}};
    } catch (const Error& e) {
      return error_response(e);
    }
  }

  Response submit_revision(const std::string& token, const nlohmann::json& body) {
    auto session = lookup(token);
    if (!session) return invalid_token();
    auto entry = find(session->run_id);
    if (!entry) return invalid_token();
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
      return {400, {{"error", "validation"}, {"message", "body must carry a string 'text'"}}};
    }
    try {
      auto result = entry->run->submit_revision(session->slot, session->participant, body["text"].get<std::string>());
      close_session(*entry, *session, "committed");
      if (result.run_complete) entry->status = RunStatus::complete;
      maybe_snapshot(*entry, result.run_complete);
      return {200, {{"committed", true}, {"committed_at", result.committed_at}, {"run_complete", result.run_complete}}};
    } catch (const Error& e) {
      if (e.code() == ErrorCode::wrong_state && !lookup(token)) return invalid_token();
      return error_response(e);
    }
  }

  /// Page-visibility changes reported by the client; logged only.
  Response report_visibility(const std::string& token, const nlohmann::json& body) {
    auto session = lookup(token);
    if (!session) return invalid_token();
    auto entry = find(session->run_id);
    if (!entry) return invalid_token();
    bool hidden = body.is_object() && body.value("hidden", true);
    entry->run->note(session->slot, session->participant, hidden ? "visibility_hidden" : "visibility_visible");
    return {204, nullptr};
  }

  Response run_metrics(const std::string& run_id) {
    auto entry = find(run_id);
    if (!entry) return not_found(run_id);
    if (!opts_.annotator) return {503, {{"error", "config"}, {"message", "no annotator configured"}}};
    try {
      auto t = entry->run->transcript();
      auto series = series_through_latest(t, *opts_.annotator);
      return {200, metrics_to_json(series, {{"run_id", run_id},
                                            {"condition", to_string(t.config.condition)},
                                            {"framing", to_string(t.config.framing)}})};
    } catch (const Error& e) {
      return error_response(e);
    }
  }

  Response run_transcript(const std::string& run_id) {
    auto entry = find(run_id);
    if (!entry) return not_found(run_id);
    return {200, to_json(entry->run->transcript())};
  }

  /// Releases expired slots of every run and invalidates their tokens.
  void sweep_timeouts() {
    for (auto& e : entries()) {
      sweep_run(*e);
      maybe_snapshot(*e);
    }
  }

  /// Blocks until the run's in-process workers have exited.
  void join_workers(const std::string& run_id) {
    auto entry = find(run_id);
    if (entry && entry->workers.joinable()) entry->workers.join();
  }

  /// Direct access for tests and embedding.
  RunState* run(const std::string& run_id) {
    auto entry = find(run_id);
    return entry ? entry->run.get() : nullptr;
  }

  std::optional<RunStatus> status(const std::string& run_id) {
    auto entry = find(run_id);
    if (!entry) return std::nullopt;
    return entry->status.load();
  }

  std::vector<std::string> run_ids() {
    std::vector<std::string> out;
    for (auto& e : entries()) out.push_back(e->id);
    return out;
  }

  /// Periodic timeout sweeps and snapshots.
  void start_background(std::chrono::milliseconds period = std::chrono::seconds(5)) {
    sweeper_ = std::jthread([this, period](std::stop_token st) {
      std::mutex m;
      std::condition_variable_any cv;
      while (!st.stop_requested()) {
        std::unique_lock lock(m);
        cv.wait_for(lock, st, period, [] { return false; });
        if (st.stop_requested()) break;
        sweep_timeouts();
      }
    });
  }

  void stop_background() {
    if (sweeper_.joinable()) {
      sweeper_.request_stop();
      sweeper_.join();
    }
  }

  /// Registers the versioned API routes, plus the participant UI bundle when
  /// `ui_dir` is given.
  void bind(httplib::Server& server, const std::optional<std::string>& ui_dir = std::nullopt) {
    auto send = [](httplib::Response& res, const Response& r) {
      res.status = r.status;
      if (!r.body.is_null()) res.set_content(r.body.dump(), "application/json");
    };
    auto parse = [](const httplib::Request& req) -> std::optional<nlohmann::json> {
      if (req.body.empty()) return nlohmann::json::object();
      try {
        return nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::parse_error&) {
        return std::nullopt;
      }
    };
    auto bad_json = Response{400, {{"error", "parse"}, {"message", "request body is not valid JSON"}}};
    const std::string p(kApiPrefix);

    server.Post(p + "/runs", [=, this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse(req);
      if (!body) return send(res, bad_json);
      send(res, create_run(*body, req.get_header_value("Idempotency-Key")));
    });
    server.Get(p + R"(/runs/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, get_run(req.matches[1]));
    });
    server.Post(p + R"(/runs/([^/]+)/tasks)", [=, this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse(req);
      if (!body) return send(res, bad_json);
      std::string participant = body->is_object() ? body->value("participant", "") : "";
      send(res, next_task(req.matches[1], participant));
    });
    server.Get(p + R"(/runs/([^/]+)/metrics)", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, run_metrics(req.matches[1]));
    });
    server.Get(p + R"(/runs/([^/]+)/transcript)", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, run_transcript(req.matches[1]));
    });
    server.Post(p + R"(/tasks/([^/]+)/choice)", [=, this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse(req);
      if (!body) return send(res, bad_json);
      send(res, submit_choice(req.matches[1], *body));
    });
    server.Post(p + R"(/tasks/([^/]+)/revision)", [=, this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse(req);
      if (!body) return send(res, bad_json);
      send(res, submit_revision(req.matches[1], *body));
    });
    server.Post(p + R"(/tasks/([^/]+)/visibility)", [=, this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse(req);
      if (!body) return send(res, bad_json);
      send(res, report_visibility(req.matches[1], *body));
    });
    server.Get(p + "/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok"})", "application/json");
    });
    if (ui_dir) server.set_mount_point("/", *ui_dir);
  }

 private:
  struct Session {
    std::string token;
    std::string run_id;
    SlotKey slot;
    std::string participant;
    std::int64_t issued = 0;
    std::int64_t expires = 0;
  };

  struct Entry {
    std::string id;
    std::filesystem::path dir;
    std::string idempotency_key;
    std::unique_ptr<RunState> run;
    std::atomic<RunStatus> status{RunStatus::created};
    std::string error;
    std::ofstream log;
    std::mutex snapshot_mu;
    std::size_t snapshot_events = 0;
    // Declared last so it is joined before the run is destroyed.
    std::jthread workers;
  };

  std::filesystem::path runs_dir() const { return opts_.data_dir / "runs"; }

  std::string next_run_id() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "run-%06zu", ++run_counter_);
    return buf;
  }

  std::string random_hex(std::size_t bytes) {
    std::lock_guard lock(token_mu_);
    std::string out;
    for (std::size_t i = 0; i < bytes; i += 8) out += text::hex64(token_rng_());
    return out.substr(0, bytes * 2);
  }

  std::shared_ptr<Entry> find(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = runs_.find(id);
    return it == runs_.end() ? nullptr : it->second;
  }

  std::vector<std::shared_ptr<Entry>> entries() {
    std::lock_guard lock(mu_);
    std::vector<std::shared_ptr<Entry>> out;
    for (auto& [_, e] : runs_) out.push_back(e);
    return out;
  }

  std::optional<Session> lookup(const std::string& token) {
    std::shared_ptr<Entry> entry;
    Session s;
    {
      std::lock_guard lock(mu_);
      auto it = sessions_.find(token);
      if (it == sessions_.end()) return std::nullopt;
      s = it->second;
      auto r = runs_.find(s.run_id);
      if (r == runs_.end()) return std::nullopt;
      entry = r->second;
    }
    if (entry->run->now() >= s.expires) {
      sweep_run(*entry);
      return std::nullopt;
    }
    return s;
  }

  static Response not_found(const std::string& id) {
    return {404, {{"error", "not_found"}, {"message", "no run " + id}}};
  }

  static Response invalid_token() {
    return {401, {{"error", "auth"}, {"message", "unknown, expired or used session token"}}};
  }

  void close_session(Entry& entry, const Session& s, const std::string& reason) {
    {
      std::lock_guard lock(mu_);
      if (sessions_.erase(s.token) == 0) return;
    }
    entry.run->note(s.slot, s.participant, "token_closed", s.token + ":" + reason);
  }

  void sweep_run(Entry& entry) {
    if (entry.status.load() != RunStatus::running) return;
    const auto now = entry.run->now();
    entry.run->release_expired(now, AgentKind::human);
    std::vector<Session> expired;
    {
      std::lock_guard lock(mu_);
      for (auto& [tok, s] : sessions_) {
        if (s.run_id == entry.id && s.expires <= now) expired.push_back(s);
      }
    }
    for (const auto& s : expired) close_session(entry, s, "expired");
  }

  /// Persists each new event as one JSON line.
  void attach(const std::shared_ptr<Entry>& entry) {
    entry->log.open(entry->dir / "events.jsonl", std::ios::app);
    Entry* raw = entry.get();
    entry->run->set_listener([raw](const Event& e) {
      raw->log << to_json(e).dump() << '\n';
      raw->log.flush();
    });
  }

  void start_workers(const std::shared_ptr<Entry>& entry) {
    if (entry->run->finished()) {
      entry->status = RunStatus::complete;
      maybe_snapshot(*entry, true);
      return;
    }
    if (!opts_.start_ai_workers || !opts_.agent_factory) return;
    if (!entry->run->has_slots_of(entry->run->config().ai_backend)) return;
    Entry* raw = entry.get();
    entry->workers = std::jthread([this, raw](std::stop_token st) {
      try {
        drive_run(*raw->run, opts_.agent_factory, {opts_.ai_workers}, st);
        if (raw->run->finished()) raw->status = RunStatus::complete;
      } catch (const std::exception& e) {
        raw->error = e.what();
        raw->status = RunStatus::failed;
        std::ofstream(raw->dir / "failed.txt") << e.what() << '\n';
      }
      maybe_snapshot(*raw, true);
    });
  }

  void maybe_snapshot(Entry& entry, bool force = false) {
    std::lock_guard lock(entry.snapshot_mu);
    const auto events = entry.run->event_count();
    if (!force && events < entry.snapshot_events + opts_.snapshot_every) return;
    write_atomically(entry.dir / "transcript.json", to_json(entry.run->transcript()).dump(2) + "\n");
    entry.snapshot_events = events;
  }

  static void write_atomically(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
      out << content;
    }
    std::filesystem::rename(tmp, path);
  }

  void recover_run(const std::filesystem::path& dir) {
    std::ifstream rec_in(dir / "run.json");
    if (!rec_in) return;
    auto record = nlohmann::json::parse(rec_in);
    if (record.value("schema", "") != kRunRecordSchema) {
      throw Error(ErrorCode::parse, dir.string() + "/run.json is not a run record");
    }
    const auto id = record.at("run_id").get<std::string>();
    auto config = config_from_json(record.at("config"));
    auto pool = pool_from_json(record.at("pool"));

    std::vector<Event> events;
    {
      std::ifstream in(dir / "events.jsonl");
      std::string line;
      while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        try {
          events.push_back(event_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception&) {
          break;  // torn final write
        }
      }
    }
    const std::int64_t last_time = events.empty() ? 0 : events.back().time_ms;

    auto entry = std::make_shared<Entry>();
    entry->id = id;
    entry->dir = dir;
    entry->idempotency_key = record.value("idempotency_key", "");
    entry->run = RunState::replay(config, pool, events, opts_.clock_factory(last_time), id);
    {
      // Rewrite the log without any torn tail before appending to it.
      std::ofstream log(dir / "events.jsonl", std::ios::trunc);
      for (const auto& ev : entry->run->events()) log << to_json(ev).dump() << '\n';
    }
    attach(entry);

    std::map<std::string, Session> restored;
    for (const auto& ev : events) {
      if (ev.type != EventType::note || !ev.slot) continue;
      if (ev.detail == "token_issued") {
        Session s{ev.text, id, *ev.slot, ev.agent, ev.time_ms,
                  ev.time_ms + static_cast<std::int64_t>(config.timeout_seconds) * 1000};
        restored[ev.text] = s;
      } else if (ev.detail == "token_closed") {
        restored.erase(ev.text.substr(0, ev.text.find(':')));
      }
    }

    if (std::filesystem::exists(dir / "failed.txt")) {
      std::ifstream f(dir / "failed.txt");
      std::getline(f, entry->error);
      entry->status = RunStatus::failed;
    } else {
      entry->status = entry->run->finished() ? RunStatus::complete : RunStatus::running;
    }
    {
      std::lock_guard lock(mu_);
      runs_[id] = entry;
      if (!entry->idempotency_key.empty()) idempotency_[entry->idempotency_key] = id;
      for (auto& [tok, s] : restored) sessions_[tok] = s;
      unsigned long n = 0;
      if (std::sscanf(id.c_str(), "run-%lu", &n) == 1 && n > run_counter_) run_counter_ = n;
    }
    if (entry->status == RunStatus::running) start_workers(entry);
  }

  ServiceOptions opts_;
  std::mutex mu_;
  std::mutex create_mu_;
  std::map<std::string, std::shared_ptr<Entry>> runs_;
  std::map<std::string, std::string> idempotency_;
  std::map<std::string, Session> sessions_;
  std::size_t run_counter_ = 0;
  std::mutex token_mu_;
  std::mt19937_64 token_rng_;
  std::jthread sweeper_;
};

}  // namespace hybridnet
