#include "kipg/errors.hpp"

namespace kipg {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::empty_body: return "empty_body";
    case ErrorCode::dangling_document_ref: return "dangling_document_ref";
    case ErrorCode::malformed_answer: return "malformed_answer";
    case ErrorCode::empty_collection: return "empty_collection";
    case ErrorCode::unknown_instance: return "unknown_instance";
    case ErrorCode::missing_placeholder: return "missing_placeholder";
    case ErrorCode::empty_pair_set: return "empty_pair_set";
    case ErrorCode::empty_trace_set: return "empty_trace_set";
    case ErrorCode::backend_unavailable: return "backend_unavailable";
    case ErrorCode::host_fault: return "host_fault";
    case ErrorCode::config_invalid: return "config_invalid";
  }
  return "unknown";
}

}  // namespace kipg
