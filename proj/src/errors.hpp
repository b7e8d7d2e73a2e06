#ifndef MTOC_ERRORS_HPP
#define MTOC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mtoc {

enum class ErrorCode {
  InvalidArgument,
  Parse,
  Schema,
  Numerical,
  Training,
  Evaluation,
  DegenerateData,
  State,
  Io,
  CorruptModel,
  VersionMismatch,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Schema: return "schema";
    case ErrorCode::Numerical: return "numerical";
    case ErrorCode::Training: return "training";
    case ErrorCode::Evaluation: return "evaluation";
    case ErrorCode::DegenerateData: return "degenerate-data";
    case ErrorCode::State: return "state";
    case ErrorCode::Io: return "io";
    case ErrorCode::CorruptModel: return "corrupt-model";
    case ErrorCode::VersionMismatch: return "version-mismatch";
  }
  return "unknown";
}

}  // namespace mtoc

#endif
