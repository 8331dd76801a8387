#include "triagebot/error.hpp"

namespace triagebot {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::format_error: return "FormatError";
    case Errc::action_grammar_error: return "ActionGrammarError";
    case Errc::invalid_table: return "InvalidTable";
    case Errc::unrepresentable: return "Unrepresentable";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::terminal_node: return "TerminalNode";
    case Errc::empty_store: return "EmptyStore";
    case Errc::unknown_session: return "UnknownSession";
    case Errc::session_closed: return "SessionClosed";
    case Errc::answers_exhausted: return "AnswersExhausted";
    case Errc::no_active_table: return "NoActiveTable";
    case Errc::unknown_type: return "UnknownType";
    case Errc::unknown_incident: return "UnknownIncident";
    case Errc::illegal_transition: return "IllegalTransition";
    case Errc::invalid_sample: return "InvalidSample";
    case Errc::channel_unavailable: return "ChannelUnavailable";
    case Errc::storage_error: return "StorageError";
    case Errc::invalid_window: return "InvalidWindow";
    case Errc::unknown_intention: return "UnknownIntention";
    case Errc::unknown_condition: return "UnknownCondition";
    case Errc::conflicting_phrase: return "ConflictingPhrase";
  }
  return "Unknown";
}

}  // namespace triagebot
