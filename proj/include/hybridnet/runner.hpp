#pragma once

#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "hybridnet/agents.hpp"
#include "hybridnet/engine.hpp"
#include "hybridnet/error.hpp"
#include "hybridnet/transcript.hpp"

namespace hybridnet {

/// Builds one agent for a worker. Called once per worker thread.
using AgentFactory = std::function<std::unique_ptr<Agent>(AgentKind kind, const RunConfig& config)>;

/// Factory for scripted agents (policy from the run config) and, if a
/// transport is given, LLM agents with the run's framing.
inline AgentFactory default_agent_factory(std::shared_ptr<const Lexicon> lexicon,
                                          std::shared_ptr<ChatTransport> transport = nullptr,
                                          std::optional<std::string> prompt_dir = std::nullopt) {
  return [lexicon = std::move(lexicon), transport = std::move(transport),
          prompt_dir = std::move(prompt_dir)](AgentKind kind, const RunConfig& cfg) -> std::unique_ptr<Agent> {
    if (kind == AgentKind::scripted) {
      return std::make_unique<ScriptedAgent>(ScriptedAgent::parse_policy(cfg.scripted_policy), lexicon, cfg.seed);
    }
    if (kind == AgentKind::llm) {
      if (!transport) throw Error(ErrorCode::config, "llm backend requested but no transport is configured");
      auto framing = prompt_dir ? PromptFraming::load(*prompt_dir, cfg.framing) : PromptFraming::defaults(cfg.framing);
      return std::make_unique<LlmAgent>(transport, std::move(framing),
                                        LlmParameters{cfg.model, cfg.temperature, static_cast<std::size_t>(cfg.min_words)});
    }
    throw Error(ErrorCode::config, "human slots are not driven in-process");
  };
}

struct DriveOptions {
  std::size_t workers = 1;
  std::chrono::milliseconds poll{50};
};

/// Works the run's non-human slots with `opts.workers` threads until the run
/// is finished or `stop` is requested. The first agent failure abandons its
/// slot, stops the other workers and is rethrown.
inline void drive_run(RunState& run, const AgentFactory& make_agent, DriveOptions opts = {}, std::stop_token stop = {}) {
  const AgentKind kind = run.config().ai_backend;
  if (!run.has_slots_of(kind)) return;

  std::stop_source local;
  std::mutex err_mu;
  std::exception_ptr first_error;

  auto fail = [&](std::exception_ptr e) {
    std::lock_guard lock(err_mu);
    if (!first_error) first_error = e;
    local.request_stop();
  };

  auto worker = [&](std::size_t w) {
    std::unique_ptr<Agent> agent;
    try {
      agent = make_agent(kind, run.config());
    } catch (...) {
      fail(std::current_exception());
      return;
    }
    std::size_t served = 0;
    while (!stop.stop_requested() && !local.stop_requested()) {
      const std::string agent_id =
          std::string(to_string(kind)) + "-w" + std::to_string(w) + "-" + std::to_string(served);
      std::optional<Task> task;
      try {
        task = run.next_task(kind, agent_id);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::run_finished) fail(std::current_exception());
        return;
      }
      if (!task) {
        if (run.finished()) return;
        run.wait_for_work(kind, opts.poll);
        continue;
      }
      ++served;
      try {
        const auto ctx = task->context();
        const auto chosen = agent->choose(ctx);
        run.submit_choice(task->slot, agent_id, static_cast<int>(chosen));
        auto revised = agent->revise(ctx, chosen);
        run.submit_revision(task->slot, agent_id, std::move(revised));
      } catch (...) {
        auto err = std::current_exception();
        try {
          run.abandon(task->slot, agent_id, "agent error");
        } catch (...) {
        }
        fail(err);
        return;
      }
    }
  };

  {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < std::max<std::size_t>(1, opts.workers); ++w) threads.emplace_back(worker, w);
  }
  if (first_error) std::rethrow_exception(first_error);
}

struct BatchOptions {
  std::size_t parallelism = 1;
  std::size_t workers_per_run = 1;
  /// When set, each transcript is written there as run-<k>-<framing>-seed<s>.json.
  std::optional<std::filesystem::path> out_dir;
  /// Clock per run; logical clocks keep scripted transcripts reproducible.
  std::function<Clock()> clock = [] { return logical_clock(); };
};

struct BatchResult {
  std::size_t index = 0;
  RunConfig config;
  std::optional<Transcript> transcript;
  std::string error;
  std::optional<std::filesystem::path> path;

  bool ok() const { return transcript.has_value(); }
};

/// Executes AI-only runs concurrently, at most `parallelism` at a time. A
/// failing run yields an error record; the others continue.
inline std::vector<BatchResult> run_llm_batch(const std::vector<RunConfig>& configs, const StatementPool& pool,
                                              const AgentFactory& make_agent, BatchOptions opts = {}) {
  for (const auto& c : configs) {
    if (c.condition != Condition::ai_only) throw Error(ErrorCode::config, "batch runs must be ai_only");
    c.validate();
  }
  if (opts.out_dir) std::filesystem::create_directories(*opts.out_dir);

  std::vector<BatchResult> results(configs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < configs.size(); k = next++) {
      auto& r = results[k];
      r.index = k;
      r.config = configs[k];
      try {
        RunState run(configs[k], pool, opts.clock(), "run-" + std::to_string(k));
        drive_run(run, make_agent, {opts.workers_per_run});
        r.transcript = run.transcript();
        if (opts.out_dir) {
          auto path = *opts.out_dir / ("run-" + std::to_string(k) + "-" + std::string(to_string(configs[k].framing)) +
                                       "-seed" + std::to_string(configs[k].seed) + ".json");
          save_transcript_file(*r.transcript, path.string());
          r.path = path;
        }
      } catch (const std::exception& e) {
        r.transcript.reset();
        r.error = e.what();
      }
    }
  };
  {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < std::max<std::size_t>(1, opts.parallelism); ++i) threads.emplace_back(work);
  }
  return results;
}

}  // namespace hybridnet
