#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "triagebot/jsonl.hpp"

namespace triagebot {

/// Identifier of one intention. Stored in canonical form: trimmed,
/// lowercase, whitespace and underscore runs collapsed to '-', so that
/// "Intention 02" and "intention-02" name the same node.
class IntentionId {
 public:
  IntentionId() = default;

  // Throws Error(format_error) when the canonical form is empty or contains
  // characters outside [a-z0-9._-].
  static IntentionId parse(std::string_view text);

  const std::string& str() const { return value_; }
  bool empty() const { return value_.empty(); }

  // "intention-02" -> "02"; other ids are returned unchanged.
  std::string short_form() const;
  // "intention-02" -> "Intention 02", the shape the CSV format uses.
  std::string display_form() const;
  // True for ids of the form intention-<digits>.
  bool is_numbered() const;

  auto operator<=>(const IntentionId&) const = default;

 private:
  explicit IntentionId(std::string v) : value_(std::move(v)) {}
  std::string value_;
};

/// Conversation outcome attached to a terminal intention. The three named
/// events are the ones the engine knows about; JSON tables may declare
/// others.
struct TerminalEvent {
  std::string name;

  static TerminalEvent notify_responsible() { return {"NotifyResponsible"}; }
  static TerminalEvent align_user() { return {"AlignUser"}; }
  static TerminalEvent close_not_incident() { return {"CloseNotIncident"}; }

  // Known terminal response texts from the triage table.
  static std::optional<TerminalEvent> from_response(std::string_view response);

  auto operator<=>(const TerminalEvent&) const = default;
};

struct Condition {
  enum class Kind { affirmative, negative, phrase };

  Kind kind = Kind::affirmative;
  std::string phrase;  // only for Kind::phrase

  static Condition affirmative() { return {Kind::affirmative, {}}; }
  static Condition negative() { return {Kind::negative, {}}; }
  static Condition custom(std::string text) { return {Kind::phrase, std::move(text)}; }

  // "Yes"/"No" (any case, trimmed) map to the polarities, anything else is
  // a phrase condition. Throws Error(format_error) on an empty string.
  static Condition parse(std::string_view text);

  // "Yes", "No", or the phrase text. Also the key into training_phrases.
  std::string label() const;

  bool operator==(const Condition&) const = default;
};

struct TransitionRow {
  IntentionId intention;
  std::string response;
  std::optional<Condition> condition;  // empty on a terminal row
  std::optional<IntentionId> target;   // empty on a terminal row

  bool is_terminal() const { return !condition && !target; }
  bool operator==(const TransitionRow&) const = default;
};

struct Intention {
  IntentionId id;
  std::string response;
  std::vector<TransitionRow> rows;
  // Keyed by Condition::label().
  std::map<std::string, std::vector<std::string>> training_phrases;
  std::optional<TerminalEvent> terminal_event;

  bool is_terminal() const;
  bool has_condition(const Condition& condition) const;
  const TransitionRow* find_row(const Condition& condition) const;
  // Transition rows only (terminal rows excluded), declaration order.
  std::vector<const TransitionRow*> transitions() const;
  // Declared event, or NotifyResponsible when a terminal has none.
  TerminalEvent effective_event() const;

  bool operator==(const Intention&) const = default;
};

class IntentionTable {
 public:
  std::int64_t version = 1;
  std::vector<Intention> intentions;
  IntentionId root;

  const Intention* find(const IntentionId& id) const;
  Intention* find(const IntentionId& id);
  std::size_t row_count() const;
  std::vector<IntentionId> terminals() const;

  bool operator==(const IntentionTable&) const = default;
};

enum class TableFormat { csv, json };

// JSON when the first non-blank character is '{', CSV otherwise.
TableFormat sniff_format(std::string_view text);

// Throws Error(format_error) for malformed documents and
// Error(action_grammar_error) for action text outside the
// "Proceed for intention NN" grammar. Does not validate structure.
IntentionTable parse_table(std::string_view text, TableFormat format);
IntentionTable parse_table(std::string_view text);

enum class Severity { warning, error };
std::string_view to_string(Severity severity);

struct Finding {
  Severity severity = Severity::error;
  std::string code;
  std::string location;  // intention id, "intention-02#1" for a row, or "table"
  std::string message;

  bool operator==(const Finding&) const = default;
};

struct ValidationReport {
  bool ok = true;
  std::vector<Finding> findings;

  std::size_t count(Severity severity) const;
  bool has(std::string_view code) const;
};

ValidationReport validate_table(const IntentionTable& table);

// Throws Error(invalid_table) if the table does not validate and
// Error(unrepresentable) when CSV cannot carry the table (transition targets
// that are not intention-<digits>, training phrases, or terminal events that
// the response text does not imply).
std::string export_table(const IntentionTable& table, TableFormat format);

Json table_to_json(const IntentionTable& table);
Json report_to_json(const ValidationReport& report);

struct IntentionChange {
  IntentionId id;
  std::vector<std::string> notes;
  Intention updated;
};

struct TableDiff {
  std::vector<Intention> added;
  std::vector<IntentionId> removed;
  std::vector<IntentionChange> modified;
  // Target-table metadata so that apply_diff can reconstruct it exactly.
  std::int64_t version = 1;
  IntentionId root;
  std::vector<IntentionId> order;
  bool metadata_changed = false;

  bool empty() const {
    return added.empty() && removed.empty() && modified.empty() && !metadata_changed;
  }
};

// Both tables must validate, otherwise Error(invalid_table).
TableDiff diff_tables(const IntentionTable& before, const IntentionTable& after);
IntentionTable apply_diff(const IntentionTable& base, const TableDiff& diff);

}  // namespace triagebot
