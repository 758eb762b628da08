#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "hybridnet/error.hpp"
#include "hybridnet/llm.hpp"
#include "hybridnet/statements.hpp"
#include "hybridnet/text.hpp"

namespace hybridnet {

enum class LabelSource { seed, llm, lexicon, manual };

constexpr std::string_view to_string(LabelSource s) {
  switch (s) {
    case LabelSource::seed: return "seed";
    case LabelSource::llm: return "llm";
    case LabelSource::lexicon: return "lexicon";
    case LabelSource::manual: return "manual";
  }
  return "manual";
}

struct StanceLabel {
  Stance value = Stance::neutral;
  LabelSource source = LabelSource::lexicon;

  friend bool operator==(const StanceLabel&, const StanceLabel&) = default;
};

struct AnnotationItem {
  std::string id;
  std::string text;
};

inline constexpr std::size_t kMaxBatchSize = 20;

struct AnnotationBatch {
  std::string question;
  std::vector<AnnotationItem> items;
};

/// Keyword rule set for one question domain.
///
/// A text is tokenized into lower-case words with clause breaks at punctuation
/// and contrastive conjunctions. Every occurrence of a positive or negative
/// phrase is a hit; a negation word up to `negation_window` tokens before the
/// phrase, in the same clause, flips the hit. Any neutral marker makes the
/// statement neutral, as do hits in both directions. No hits is neutral.
class Lexicon {
 public:
  Lexicon() = default;

  static Lexicon from_json(const nlohmann::json& doc) {
    Lexicon lex;
    try {
      auto phrases = [](const nlohmann::json& arr) {
        std::vector<std::vector<std::string>> out;
        for (const auto& p : arr) {
          std::vector<std::string> words;
          for (auto& t : text::tokenize(p.get<std::string>())) {
            if (!t.clause_break) words.push_back(t.word);
          }
          if (!words.empty()) out.push_back(std::move(words));
        }
        return out;
      };
      lex.positive_ = phrases(doc.at("positive"));
      lex.negative_ = phrases(doc.at("negative"));
      lex.neutral_ = phrases(doc.value("neutral", nlohmann::json::array()));
      for (const auto& n : doc.value("negations", nlohmann::json::array())) {
        lex.negations_.push_back(text::to_lower(n.get<std::string>()));
      }
      lex.window_ = doc.value("negation_window", 3);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, std::string("lexicon: ") + e.what());
    }
    if (lex.window_ < 0) throw Error(ErrorCode::validation, "lexicon negation_window must be >= 0");
    return lex;
  }

  static Lexicon load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::not_found, "cannot open lexicon " + path);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::parse, std::string("lexicon: ") + e.what());
    }
  }

  Stance classify(std::string_view statement) const {
    const auto tokens = text::tokenize(statement);
    for (const auto& phrase : neutral_) {
      if (!matches(tokens, phrase).empty()) return Stance::neutral;
    }
    int pos = 0, neg = 0;
    auto tally = [&](const std::vector<std::vector<std::string>>& list, bool positive) {
      for (const auto& phrase : list) {
        for (auto at : matches(tokens, phrase)) {
          bool p = negated(tokens, at) ? !positive : positive;
          (p ? pos : neg) += 1;
        }
      }
    };
    tally(positive_, true);
    tally(negative_, false);
    if (pos > 0 && neg > 0) return Stance::neutral;
    if (pos > 0) return Stance::positive;
    if (neg > 0) return Stance::negative;
    return Stance::neutral;
  }

 private:
  static std::vector<std::size_t> matches(const std::vector<text::Token>& tokens,
                                          const std::vector<std::string>& phrase) {
    std::vector<std::size_t> out;
    if (phrase.size() > tokens.size()) return out;
    for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
      bool ok = true;
      for (std::size_t k = 0; k < phrase.size() && ok; ++k) {
        ok = !tokens[i + k].clause_break && tokens[i + k].word == phrase[k];
      }
      if (ok) out.push_back(i);
    }
    return out;
  }

  bool negated(const std::vector<text::Token>& tokens, std::size_t at) const {
    for (std::size_t d = 1; d <= static_cast<std::size_t>(window_) && d <= at; ++d) {
      const auto& t = tokens[at - d];
      if (t.clause_break) return false;
      if (std::find(negations_.begin(), negations_.end(), t.word) != negations_.end()) return true;
    }
    return false;
  }

  std::vector<std::vector<std::string>> positive_;
  std::vector<std::vector<std::string>> negative_;
  std::vector<std::vector<std::string>> neutral_;
  std::vector<std::string> negations_;
  int window_ = 3;
};

/// Labels a batch of items; labels come back in item order.
class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual std::vector<StanceLabel> label(std::string_view question, std::span<const AnnotationItem> items) = 0;
};

class LexiconAnnotator final : public Annotator {
 public:
  explicit LexiconAnnotator(std::shared_ptr<const Lexicon> lexicon) : lexicon_(std::move(lexicon)) {}

  std::vector<StanceLabel> label(std::string_view, std::span<const AnnotationItem> items) override {
    std::vector<StanceLabel> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back({lexicon_->classify(item.text), LabelSource::lexicon});
    return out;
  }

  const Lexicon& lexicon() const { return *lexicon_; }

 private:
  std::shared_ptr<const Lexicon> lexicon_;
};

namespace detail {

inline std::string annotation_prompt(std::string_view question, std::span<const AnnotationItem> items) {
  std::string out =
      "Classify each statement below as positive, negative, or neutral with respect to the question.\n"
      "positive: the statement argues for a yes answer. negative: it argues for a no answer.\n"
      "neutral: it takes no side or presents both perspectives.\n\n"
      "Question: ";
  out += question;
  out += "\n\nStatements:\n";
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += std::to_string(i + 1) + ". " + items[i].text + "\n";
  }
  out += "\nReply with exactly " + std::to_string(items.size()) +
         " lines, one per statement in order, each of the form \"<number>: <label>\".";
  return out;
}

/// Accepts a JSON array of label strings, or one "<n>: <label>" line per item.
inline std::optional<std::vector<Stance>> parse_annotation_reply(std::string_view reply) {
  auto trimmed = text::trim(reply);
  if (!trimmed.empty() && trimmed.front() == '[') {
    try {
      auto arr = nlohmann::json::parse(trimmed);
      std::vector<Stance> out;
      for (const auto& v : arr) {
        if (!v.is_string()) return std::nullopt;
        auto s = parse_stance(v.get<std::string>());
        if (!s) return std::nullopt;
        out.push_back(*s);
      }
      return out;
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  }
  static const std::regex kLine(R"(^\s*(\d+)\s*[:.)-]\s*\**\s*(positive|negative|neutral)\b)", std::regex::icase);
  std::vector<Stance> out;
  std::istringstream in(trimmed);
  std::string line;
  while (std::getline(in, line)) {
    std::smatch m;
    if (std::regex_search(line, m, kLine)) {
      if (static_cast<std::size_t>(std::stoul(m[1].str())) != out.size() + 1) return std::nullopt;
      out.push_back(*parse_stance(m[2].str()));
    }
  }
  return out;
}

}  // namespace detail

/// Batch annotation through a chat-completions transport. A reply whose label
/// count does not match the batch is retried once, then reported.
class LlmAnnotator final : public Annotator {
 public:
  LlmAnnotator(std::shared_ptr<ChatTransport> transport, std::string model, double temperature = 0.0)
      : transport_(std::move(transport)), model_(std::move(model)), temperature_(temperature) {}

  std::vector<StanceLabel> label(std::string_view question, std::span<const AnnotationItem> items) override {
    ChatRequest req{model_, {{"user", detail::annotation_prompt(question, items)}}, temperature_};
    for (int attempt = 0; attempt < 2; ++attempt) {
      auto parsed = detail::parse_annotation_reply(transport_->complete(req));
      if (parsed && parsed->size() == items.size()) {
        std::vector<StanceLabel> out;
        for (auto s : *parsed) out.push_back({s, LabelSource::llm});
        return out;
      }
    }
    throw Error(ErrorCode::label_mismatch,
                "annotator did not return " + std::to_string(items.size()) + " labels after one retry");
  }

 private:
  std::shared_ptr<ChatTransport> transport_;
  std::string model_;
  double temperature_;
};

struct AnnotationDisagreement {
  std::string id;
  std::string text;
  Stance primary;
  Stance secondary;
};

/// Runs a primary and a secondary annotator; returns the primary labels and
/// records every disagreement. Labels are never merged.
class AuditAnnotator final : public Annotator {
 public:
  AuditAnnotator(std::shared_ptr<Annotator> primary, std::shared_ptr<Annotator> secondary)
      : primary_(std::move(primary)), secondary_(std::move(secondary)) {}

  std::vector<StanceLabel> label(std::string_view question, std::span<const AnnotationItem> items) override {
    auto a = primary_->label(question, items);
    auto b = secondary_->label(question, items);
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < items.size() && i < b.size(); ++i) {
      if (a[i].value != b[i].value) {
        disagreements_.push_back({items[i].id, items[i].text, a[i].value, b[i].value});
      }
    }
    return a;
  }

  std::vector<AnnotationDisagreement> disagreements() const {
    std::lock_guard lock(mu_);
    return disagreements_;
  }

 private:
  std::shared_ptr<Annotator> primary_;
  std::shared_ptr<Annotator> secondary_;
  mutable std::mutex mu_;
  std::vector<AnnotationDisagreement> disagreements_;
};

/// Memoizes labels by (question, text) so repeated metric queries do not
/// re-annotate unchanged statements.
class CachingAnnotator final : public Annotator {
 public:
  explicit CachingAnnotator(std::shared_ptr<Annotator> inner) : inner_(std::move(inner)) {}

  std::vector<StanceLabel> label(std::string_view question, std::span<const AnnotationItem> items) override {
    std::vector<StanceLabel> out(items.size());
    std::vector<AnnotationItem> missing;
    std::vector<std::size_t> where;
    {
      std::lock_guard lock(mu_);
      for (std::size_t i = 0; i < items.size(); ++i) {
        auto it = cache_.find(key(question, items[i].text));
        if (it != cache_.end()) {
          out[i] = it->second;
        } else {
          missing.push_back(items[i]);
          where.push_back(i);
        }
      }
    }
    if (!missing.empty()) {
      auto labels = inner_->label(question, missing);
      std::lock_guard lock(mu_);
      for (std::size_t k = 0; k < missing.size(); ++k) {
        out[where[k]] = labels[k];
        cache_[key(question, missing[k].text)] = labels[k];
      }
    }
    return out;
  }

 private:
  static std::string key(std::string_view q, std::string_view t) {
    std::string k(q);
    k.push_back('\0');
    k.append(t);
    return k;
  }

  std::shared_ptr<Annotator> inner_;
  std::mutex mu_;
  std::unordered_map<std::string, StanceLabel> cache_;
};

/// Labels one batch of at most 20 items.
inline std::map<std::string, StanceLabel> annotate_batch(const AnnotationBatch& batch, Annotator& annotator) {
  if (batch.items.empty() || batch.items.size() > kMaxBatchSize) {
    throw Error(ErrorCode::validation, "annotation batch must hold 1.." + std::to_string(kMaxBatchSize) +
                                           " items, got " + std::to_string(batch.items.size()));
  }
  auto labels = annotator.label(batch.question, batch.items);
  if (labels.size() != batch.items.size()) {
    throw Error(ErrorCode::label_mismatch, "annotator returned " + std::to_string(labels.size()) + " labels for " +
                                               std::to_string(batch.items.size()) + " items");
  }
  std::map<std::string, StanceLabel> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out[batch.items[i].id] = labels[i];
  return out;
}

}  // namespace hybridnet
