#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hybridnet {

enum class ErrorCode {
  invalid_node,
  parse,
  validation,
  stance_imbalance,
  duplicate_id,
  infeasible,
  config,
  run_finished,
  wrong_state,
  out_of_range,
  too_short,
  too_early,
  transport,
  unparseable,
  label_mismatch,
  incomplete_transcript,
  empty_input,
  dimension_mismatch,
  non_convergence,
  auth,
  not_found,
  gone,
  io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_node: return "invalid_node";
    case ErrorCode::parse: return "parse";
    case ErrorCode::validation: return "validation";
    case ErrorCode::stance_imbalance: return "stance_imbalance";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::config: return "config";
    case ErrorCode::run_finished: return "run_finished";
    case ErrorCode::wrong_state: return "wrong_state";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::too_short: return "too_short";
    case ErrorCode::too_early: return "too_early";
    case ErrorCode::transport: return "transport";
    case ErrorCode::unparseable: return "unparseable";
    case ErrorCode::label_mismatch: return "label_mismatch";
    case ErrorCode::incomplete_transcript: return "incomplete_transcript";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::non_convergence: return "non_convergence";
    case ErrorCode::auth: return "auth";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::gone: return "gone";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code so the
/// service layer can map it onto a status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hybridnet
