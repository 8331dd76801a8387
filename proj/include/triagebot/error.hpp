#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace triagebot {

/// Every failure the engine can report. The HTTP layer maps each one to a
/// single (status, code) pair, see http_api.cpp.
enum class Errc {
  format_error,
  action_grammar_error,
  invalid_table,
  unrepresentable,
  invalid_config,
  terminal_node,
  empty_store,
  unknown_session,
  session_closed,
  answers_exhausted,
  no_active_table,
  unknown_type,
  unknown_incident,
  illegal_transition,
  invalid_sample,
  channel_unavailable,
  storage_error,
  invalid_window,
  unknown_intention,
  unknown_condition,
  conflicting_phrase,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view code_name() const { return to_string(code_); }

 private:
  Errc code_;
};

}  // namespace triagebot
