#pragma once

#include <stdexcept>
#include <string>

namespace fgclep {

enum class errc {
  invalid_feature,
  unknown_diagnosis,
  format_error,
  truncation,
  consistency,
  io_error,
  shape_mismatch,
  empty_input,
  degenerate_vector,
  numeric_failure,
  transport,
  parse_error,
  corruption,
  version_mismatch,
  config_error,
  empty_evaluation,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::invalid_feature: return "invalid_feature";
    case errc::unknown_diagnosis: return "unknown_diagnosis";
    case errc::format_error: return "format_error";
    case errc::truncation: return "truncation";
    case errc::consistency: return "consistency";
    case errc::io_error: return "io_error";
    case errc::shape_mismatch: return "shape_mismatch";
    case errc::empty_input: return "empty_input";
    case errc::degenerate_vector: return "degenerate_vector";
    case errc::numeric_failure: return "numeric_failure";
    case errc::transport: return "transport";
    case errc::parse_error: return "parse_error";
    case errc::corruption: return "corruption";
    case errc::version_mismatch: return "version_mismatch";
    case errc::config_error: return "config_error";
    case errc::empty_evaluation: return "empty_evaluation";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace fgclep
