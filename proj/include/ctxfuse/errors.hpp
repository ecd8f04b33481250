#pragma once

#include <stdexcept>
#include <string>

namespace ctxfuse {

// Every failure the library reports, as a stable code. The CLI maps any
// Error to exit code 1; flag misuse is handled before the library runs.
enum class errc {
  empty_corpus,
  corpus_format,
  reserved_token_in_content,
  unknown_token,
  doc_count_mismatch,
  alignment_mismatch,
  index_out_of_range,
  table_format,
  unnormalized_rule,
  backend_spawn,
  backend_protocol,
  backend_io,
  vocab_mismatch,
  bad_model_file,
  negative_alpha,
  invalid_temperature,
  invalid_config,
  desynced_sessions,
  search_space_too_large,
  length_mismatch,
  empty_input,
  degenerate_variance,
  empty_after_filtering,
  io_error,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::empty_corpus: return "empty corpus";
    case errc::corpus_format: return "corpus format";
    case errc::reserved_token_in_content: return "reserved token in content";
    case errc::unknown_token: return "unknown token";
    case errc::doc_count_mismatch: return "document count mismatch";
    case errc::alignment_mismatch: return "alignment mismatch";
    case errc::index_out_of_range: return "index out of range";
    case errc::table_format: return "table format";
    case errc::unnormalized_rule: return "unnormalized rule";
    case errc::backend_spawn: return "backend spawn";
    case errc::backend_protocol: return "backend protocol";
    case errc::backend_io: return "backend io";
    case errc::vocab_mismatch: return "vocabulary mismatch";
    case errc::bad_model_file: return "bad model file";
    case errc::negative_alpha: return "negative alpha";
    case errc::invalid_temperature: return "invalid temperature";
    case errc::invalid_config: return "invalid configuration";
    case errc::desynced_sessions: return "desynced sessions";
    case errc::search_space_too_large: return "search space too large";
    case errc::length_mismatch: return "length mismatch";
    case errc::empty_input: return "empty input";
    case errc::degenerate_variance: return "degenerate variance";
    case errc::empty_after_filtering: return "empty after filtering";
    case errc::io_error: return "io error";
  }
  return "unknown error";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace ctxfuse
