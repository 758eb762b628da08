#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridnet/error.hpp"
#include "hybridnet/llm.hpp"
#include "hybridnet/random.hpp"
#include "hybridnet/stance.hpp"
#include "hybridnet/text.hpp"

namespace hybridnet {

enum class AgentKind { human, llm, scripted };

constexpr std::string_view to_string(AgentKind k) {
  switch (k) {
    case AgentKind::human: return "human";
    case AgentKind::llm: return "llm";
    case AgentKind::scripted: return "scripted";
  }
  return "scripted";
}

inline AgentKind parse_agent_kind(std::string_view s) {
  if (s == "human") return AgentKind::human;
  if (s == "llm") return AgentKind::llm;
  if (s == "scripted") return AgentKind::scripted;
  throw Error(ErrorCode::config, "unknown agent kind '" + std::string(s) + "'");
}

/// Backend selection plus its parameters (model/endpoint/temperature for llm,
/// policy for scripted).
struct AgentBackend {
  AgentKind kind = AgentKind::scripted;
  std::map<std::string, std::string> parameters;
};

/// What an agent sees for one node-slot: the question and the previous
/// iteration's statements, without authorship. `slot_key` identifies the slot
/// for seeded policies only.
struct TaskContext {
  std::string_view question;
  std::span<const std::string> observed;
  std::uint64_t slot_key = 0;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual AgentKind kind() const = 0;
  /// Zero-based index into ctx.observed.
  virtual std::size_t choose(const TaskContext& ctx) = 0;
  virtual std::string revise(const TaskContext& ctx, std::size_t chosen) = 0;
};

inline void require_observed(const TaskContext& ctx) {
  if (ctx.observed.empty()) throw Error(ErrorCode::empty_input, "no observed statements to choose from");
}

namespace paraphrase {

inline constexpr std::array<std::string_view, 5> kPrefixes{
    "Most people here would agree that ",
    "The group seems to accept that ",
    "It is broadly agreed that ",
    "Many of us would say that ",
    "The common view here is that ",
};

/// Removes one of our own lead-ins so repeated paraphrasing does not nest.
inline std::string strip(std::string_view s) {
  for (auto p : kPrefixes) {
    if (s.substr(0, p.size()) == p) {
      std::string core(s.substr(p.size()));
      if (!core.empty()) core[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(core[0])));
      return core;
    }
  }
  return std::string(s);
}

/// Wraps the statement in a seeded lead-in. The claim itself is untouched, so
/// its stance is preserved.
inline std::string apply(std::string_view statement, Rng& rng) {
  auto core = strip(text::trim(statement));
  bool acronym = core.size() > 1 && std::isupper(static_cast<unsigned char>(core[1]));
  if (!core.empty() && !acronym) core[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(core[0])));
  return std::string(kPrefixes[uniform_index(rng, kPrefixes.size())]) + core;
}

}  // namespace paraphrase

/// Deterministic in-process agents used as convergence oracles and for
/// cost-free batch runs.
///
///  - majority-copy: pick a statement with the modal stance among the observed
///    ones (ties between stances broken by a seeded draw, then the first such
///    statement), and reproduce it behind a stance-preserving lead-in.
///  - stubborn: keep the first observed statement (the node's own) verbatim.
///  - random: pick uniformly, paraphrase as above.
class ScriptedAgent final : public Agent {
 public:
  enum class Policy { majority_copy, stubborn, random };

  static Policy parse_policy(std::string_view name) {
    if (name == "majority-copy") return Policy::majority_copy;
    if (name == "stubborn") return Policy::stubborn;
    if (name == "random") return Policy::random;
    throw Error(ErrorCode::config, "no scripted policy registered as '" + std::string(name) + "'");
  }

  static std::vector<std::string> policies() { return {"majority-copy", "stubborn", "random"}; }

  ScriptedAgent(Policy policy, std::shared_ptr<const Lexicon> lexicon, std::uint64_t run_seed)
      : policy_(policy), lexicon_(std::move(lexicon)), run_seed_(run_seed) {
    if (policy_ == Policy::majority_copy && !lexicon_) {
      throw Error(ErrorCode::config, "majority-copy needs a lexicon to read stances");
    }
  }

  AgentKind kind() const override { return AgentKind::scripted; }

  std::size_t choose(const TaskContext& ctx) override {
    require_observed(ctx);
    if (ctx.observed.size() == 1) return 0;
    Rng rng(derive_seed(run_seed_, {ctx.slot_key, 0xc40}));
    switch (policy_) {
      case Policy::stubborn: return 0;
      case Policy::random: return uniform_index(rng, ctx.observed.size());
      case Policy::majority_copy: break;
    }
    std::vector<Stance> stances;
    std::map<int, int> counts;
    for (const auto& s : ctx.observed) {
      stances.push_back(lexicon_->classify(s));
      ++counts[value(stances.back())];
    }
    int best = 0;
    for (auto [_, c] : counts) best = std::max(best, c);
    std::vector<int> modal;
    for (auto [v, c] : counts) {
      if (c == best) modal.push_back(v);
    }
    const int pick = modal[uniform_index(rng, modal.size())];
    for (std::size_t i = 0; i < stances.size(); ++i) {
      if (value(stances[i]) == pick) return i;
    }
    return 0;
  }

  std::string revise(const TaskContext& ctx, std::size_t chosen) override {
    require_observed(ctx);
    if (chosen >= ctx.observed.size()) throw Error(ErrorCode::out_of_range, "chosen index out of range");
    if (policy_ == Policy::stubborn) return ctx.observed[chosen];
    Rng rng(derive_seed(run_seed_, {ctx.slot_key, 0x7e7}));
    return paraphrase::apply(ctx.observed[chosen], rng);
  }

 private:
  Policy policy_;
  std::shared_ptr<const Lexicon> lexicon_;
  std::uint64_t run_seed_;
};

struct LlmParameters {
  std::string model = "x-ai/grok-4-fast";
  double temperature = 1.0;
  std::size_t min_words = 5;
};

/// Chat-completions agent. choose() expects "answer: <k>" and retries once on
/// anything else; revise() retries once when the reply is too short.
class LlmAgent final : public Agent {
 public:
  LlmAgent(std::shared_ptr<ChatTransport> transport, PromptFraming framing, LlmParameters params = {})
      : transport_(std::move(transport)), framing_(std::move(framing)), params_(std::move(params)) {}

  AgentKind kind() const override { return AgentKind::llm; }

  std::size_t choose(const TaskContext& ctx) override {
    require_observed(ctx);
    if (ctx.observed.size() == 1) return 0;
    std::vector<std::string> observed(ctx.observed.begin(), ctx.observed.end());
    ChatRequest req{params_.model, {{"user", render_choice_prompt(framing_, ctx.question, observed)}},
                    params_.temperature};
    auto reply = transport_->complete(req);
    if (auto idx = parse_choice_reply(reply, observed.size())) return *idx;
    req.messages.push_back({"assistant", reply});
    req.messages.push_back({"user", "Reply only with one line of the form \"answer: <k>\", where <k> is between 1 and " +
                                        std::to_string(observed.size()) + "."});
    reply = transport_->complete(req);
    if (auto idx = parse_choice_reply(reply, observed.size())) return *idx;
    throw Error(ErrorCode::unparseable, "no 'answer: <k>' in model reply after one retry");
  }

  std::string revise(const TaskContext& ctx, std::size_t chosen) override {
    require_observed(ctx);
    if (chosen >= ctx.observed.size()) throw Error(ErrorCode::out_of_range, "chosen index out of range");
    std::vector<std::string> observed(ctx.observed.begin(), ctx.observed.end());
    ChatRequest req{params_.model,
                    {{"user", render_revision_prompt(framing_, ctx.question, observed, observed[chosen])}},
                    params_.temperature};
    auto reply = clean_revision_reply(transport_->complete(req));
    if (text::word_count(reply) >= params_.min_words) return reply;
    req.messages.push_back({"assistant", reply});
    req.messages.push_back({"user", "That reply is too short. Write the revised statement again using at least " +
                                        std::to_string(params_.min_words) + " words."});
    reply = clean_revision_reply(transport_->complete(req));
    if (text::word_count(reply) >= params_.min_words) return reply;
    throw Error(ErrorCode::too_short, "model revision has fewer than " + std::to_string(params_.min_words) +
                                          " words after one retry");
  }

  const PromptFraming& framing() const { return framing_; }

 private:
  std::shared_ptr<ChatTransport> transport_;
  PromptFraming framing_;
  LlmParameters params_;
};

}  // namespace hybridnet
