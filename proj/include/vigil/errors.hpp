#pragma once

#include <stdexcept>
#include <string>

namespace vigil {

/// Error categories; `exit_code_for` maps them onto process exit codes.
enum class errc {
  config,              // bad flags, unusable rule tables, missing inputs
  parse,               // malformed JSON / unparseable line
  schema,              // well-formed JSON missing or violating required fields
  timestamp,           // unparseable timestamp value
  structural,          // prompt marker problems (missing/duplicated/unbalanced)
  illegal_transition,  // stage-machine violation
  guard_abort,         // core-identity guard tripped
  io,                  // filesystem failure
  internal,            // precondition violations, injected faults
};

class error : public std::runtime_error {
 public:
  error(errc code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

/// Raised when a stage tool is invoked out of order. Names both stages.
class illegal_transition_error : public error {
 public:
  illegal_transition_error(std::string required_stage, std::string current_stage)
      : error(errc::illegal_transition,
              "illegal transition: requires " + required_stage + ", at " + current_stage),
        required_(std::move(required_stage)),
        current_(std::move(current_stage)) {}

  const std::string& required_stage() const noexcept { return required_; }
  const std::string& current_stage() const noexcept { return current_; }

 private:
  std::string required_;
  std::string current_;
};

/// Raised when a prompt patch would mutate the core-identity block.
class guard_abort_error : public error {
 public:
  guard_abort_error(std::size_t byte_offset, std::string detail)
      : error(errc::guard_abort,
              "core-identity guard abort at byte " + std::to_string(byte_offset) + ": " + detail),
        offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

inline int exit_code_for(errc code) {
  switch (code) {
    case errc::illegal_transition:
      return 2;
    case errc::guard_abort:
      return 3;
    case errc::io:
      return 4;
    default:
      return 1;
  }
}

}  // namespace vigil
