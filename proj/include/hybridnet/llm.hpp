#pragma once

#include <atomic>
#include <cstddef>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "hybridnet/error.hpp"
#include "hybridnet/text.hpp"

namespace hybridnet {

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
};

inline nlohmann::json to_json(const ChatRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", req.model}, {"messages", messages}, {"temperature", req.temperature}};
}

/// One chat-completions round trip. Implementations must be safe to call from
/// several threads at once.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

/// Adapts a callable; used for stubs and recorded replies.
class FunctionTransport final : public ChatTransport {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit FunctionTransport(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const ChatRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

/// Forwards to another transport and counts calls.
class CountingTransport final : public ChatTransport {
 public:
  explicit CountingTransport(std::shared_ptr<ChatTransport> inner) : inner_(std::move(inner)) {}
  std::string complete(const ChatRequest& request) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_->complete(request);
  }
  std::size_t calls() const noexcept { return calls_.load(std::memory_order_relaxed); }

 private:
  std::shared_ptr<ChatTransport> inner_;
  std::atomic<std::size_t> calls_{0};
};

struct HttpTransportOptions {
  std::string endpoint;  // e.g. https://openrouter.ai/api/v1/chat/completions
  std::string api_key;
  int timeout_seconds = 120;
};

/// POSTs an OpenAI-style chat-completions body and returns
/// choices[0].message.content.
class HttpChatTransport final : public ChatTransport {
 public:
  explicit HttpChatTransport(HttpTransportOptions opts) : opts_(std::move(opts)) {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(opts_.endpoint, m, kUrl)) {
      throw Error(ErrorCode::config, "malformed LLM endpoint '" + opts_.endpoint + "'");
    }
    base_ = m[1];
    path_ = m[2].matched ? std::string(m[2]) : "/";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (base_.rfind("https://", 0) == 0) {
      throw Error(ErrorCode::config, "https endpoint requested but TLS support was not compiled in");
    }
#endif
  }

  std::string complete(const ChatRequest& request) override {
    httplib::Client client(base_);
    client.set_connection_timeout(opts_.timeout_seconds, 0);
    client.set_read_timeout(opts_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!opts_.api_key.empty()) headers.emplace("Authorization", "Bearer " + opts_.api_key);
    auto res = client.Post(path_, headers, to_json(request).dump(), "application/json");
    if (!res) {
      throw Error(ErrorCode::transport, "request to " + opts_.endpoint + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(ErrorCode::transport, "LLM endpoint returned HTTP " + std::to_string(res->status) + ": " +
                                            res->body.substr(0, 200));
    }
    try {
      auto body = nlohmann::json::parse(res->body);
      return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::transport, std::string("malformed completion body: ") + e.what());
    }
  }

 private:
  HttpTransportOptions opts_;
  std::string base_;
  std::string path_;
};

enum class Framing { consensus, opinion };

constexpr std::string_view to_string(Framing f) {
  return f == Framing::consensus ? "consensus" : "opinion";
}

inline Framing parse_framing(std::string_view s) {
  if (s == "consensus") return Framing::consensus;
  if (s == "opinion") return Framing::opinion;
  throw Error(ErrorCode::config, "unknown framing '" + std::string(s) + "'");
}

namespace prompts {

// Kept byte-identical to data/prompts/*.txt (checked by the test suite).
inline constexpr std::string_view kChooseScaffold =
    R"(You are a participant in a study of how opinions travel through a group of people.
Each participant holds one position in a network. In the previous round, the
participants around your position wrote the statements below in answer to a question.

Question: {question}

Statements:
{observed_list}

{instruction}
No justification is needed. Reply with one line of the form "answer: <k>", where <k> is the number of the statement you choose.
)";

inline constexpr std::string_view kReviseScaffold =
    R"(You are a participant in a study of how opinions travel through a group of people.
Each participant holds one position in a network. In the previous round, the
participants around your position wrote the statements below in answer to a question.

Question: {question}

Statements:
{observed_list}

You selected this statement:
{chosen}

{instruction}
Write at least five words. Reply with the revised statement only, on a single line, without quotation marks.
)";

inline constexpr std::string_view kConsensusChoose = "Choose the answer this group would most likely agree with.";
inline constexpr std::string_view kConsensusRevise =
    "Revise the selected answer so that it most accurately reflects the views that the previously observed "
    "group of participants would be likely to agree with.";
inline constexpr std::string_view kOpinionChoose = "Choose the answer that best matches your own opinion on the question.";
inline constexpr std::string_view kOpinionRevise =
    "Revise the selected answer so that it most accurately reflects your own opinion on the question.";

}  // namespace prompts

/// Choice and revision prompts for one framing. The two framings share the
/// scaffolds and differ only in the {instruction} clause.
struct PromptFraming {
  Framing framing = Framing::consensus;
  std::string choose_scaffold{prompts::kChooseScaffold};
  std::string revise_scaffold{prompts::kReviseScaffold};
  std::string choose_instruction;
  std::string revise_instruction;

  static PromptFraming defaults(Framing f) {
    PromptFraming p;
    p.framing = f;
    p.choose_instruction = f == Framing::consensus ? prompts::kConsensusChoose : prompts::kOpinionChoose;
    p.revise_instruction = f == Framing::consensus ? prompts::kConsensusRevise : prompts::kOpinionRevise;
    return p;
  }

  /// Loads choose.txt, revise.txt and <framing>_{choose,revise}.txt from a directory.
  static PromptFraming load(const std::string& dir, Framing f) {
    auto read = [&](const std::string& name) {
      std::ifstream in(dir + "/" + name);
      if (!in) throw Error(ErrorCode::not_found, "missing prompt template " + dir + "/" + name);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    PromptFraming p;
    p.framing = f;
    p.choose_scaffold = read("choose.txt");
    p.revise_scaffold = read("revise.txt");
    auto prefix = std::string(to_string(f));
    p.choose_instruction = text::trim(read(prefix + "_choose.txt"));
    p.revise_instruction = text::trim(read(prefix + "_revise.txt"));
    return p;
  }
};

/// Replaces every {name} placeholder found in `vars`; unknown braces are left alone.
inline std::string substitute(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& vars) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        auto name = tmpl.substr(i + 1, close - i - 1);
        bool replaced = false;
        for (const auto& [k, v] : vars) {
          if (k == name) {
            out += v;
            replaced = true;
            break;
          }
        }
        if (replaced) {
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

inline std::string numbered_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + ". " + items[i];
  }
  return out;
}

inline std::string render_choice_prompt(const PromptFraming& p, std::string_view question,
                                        const std::vector<std::string>& observed) {
  return substitute(p.choose_scaffold, {{"question", std::string(question)},
                                        {"observed_list", numbered_list(observed)},
                                        {"instruction", p.choose_instruction}});
}

inline std::string render_revision_prompt(const PromptFraming& p, std::string_view question,
                                          const std::vector<std::string>& observed, std::string_view chosen) {
  return substitute(p.revise_scaffold, {{"question", std::string(question)},
                                        {"observed_list", numbered_list(observed)},
                                        {"chosen", std::string(chosen)},
                                        {"instruction", p.revise_instruction}});
}

/// Extracts a zero-based index from a reply containing "answer: <k>" (1-based).
inline std::optional<std::size_t> parse_choice_reply(std::string_view reply, std::size_t count) {
  static const std::regex kAnswer(R"(answer\s*[:=]\s*\**\s*(\d+))", std::regex::icase);
  std::string s(reply);
  std::smatch m;
  if (!std::regex_search(s, m, kAnswer)) return std::nullopt;
  auto digits = m[1].str();
  if (digits.size() > 3) return std::nullopt;
  auto k = static_cast<std::size_t>(std::stoul(digits));
  if (k < 1 || k > count) return std::nullopt;
  return k - 1;
}

/// Strips whitespace and one layer of surrounding quotes.
inline std::string clean_revision_reply(std::string_view reply) {
  auto s = text::trim(reply);
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    s = text::trim(std::string_view(s).substr(1, s.size() - 2));
  }
  return s;
}

}  // namespace hybridnet
