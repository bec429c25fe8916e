#pragma once

#include <stdexcept>
#include <string>

namespace kipg {

// Error taxonomy for the whole framework. Validation failures map to CLI
// exit code 1, backend failures to exit code 2.
enum class ErrorCode {
  parse_error,
  duplicate_id,
  empty_body,
  dangling_document_ref,
  malformed_answer,
  empty_collection,
  unknown_instance,
  missing_placeholder,
  empty_pair_set,
  empty_trace_set,
  backend_unavailable,
  host_fault,
  config_invalid,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Malformed record in a corpus or fixture file. line() is 1-based; 0 means
// the location is unknown.
class ParseError : public Error {
 public:
  ParseError(std::string message, std::size_t line = 0)
      : Error(ErrorCode::parse_error, std::move(message)), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class BackendUnavailableError : public Error {
 public:
  explicit BackendUnavailableError(std::string message)
      : Error(ErrorCode::backend_unavailable, std::move(message)) {}
};

}  // namespace kipg
