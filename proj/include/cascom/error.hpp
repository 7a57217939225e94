#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cascom {

// Machine-readable failure categories. The service maps these onto HTTP
// status codes and the `code` field of error bodies.
enum class ErrorCode {
  parse_error,
  kb_validation_failed,
  duplicate_id,
  dangling_reference,
  unknown_task,
  unknown_question,
  invalid_answer,
  invalid_weights,
  underivable_extra,
  unknown_kind,
  unknown_solution,
  unknown_session,
  invalid_argument,
  io_error,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::kb_validation_failed: return "kb_validation_failed";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::dangling_reference: return "dangling_reference";
    case ErrorCode::unknown_task: return "unknown_task";
    case ErrorCode::unknown_question: return "unknown_question";
    case ErrorCode::invalid_answer: return "invalid_answer";
    case ErrorCode::invalid_weights: return "invalid_weights";
    case ErrorCode::underivable_extra: return "underivable_extra";
    case ErrorCode::unknown_kind: return "unknown_kind";
    case ErrorCode::unknown_solution: return "unknown_solution";
    case ErrorCode::unknown_session: return "unknown_session";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::io_error: return "io_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cascom
