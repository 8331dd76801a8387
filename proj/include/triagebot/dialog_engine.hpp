#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "triagebot/intention_model.hpp"
#include "triagebot/nlu_matcher.hpp"

namespace triagebot {

inline constexpr std::string_view kClarificationPrefix = "Sorry, I didn't understand. ";
inline constexpr std::string_view kNotIncidentReply = "Understood — no incident recorded.";
inline constexpr std::string_view kEscalationReply = "Notify the responsible analyst or group";

// Pseudo-nodes for outcomes the table itself does not contain.
IntentionId synthetic_close_id();
IntentionId synthetic_escalation_id();

struct TerminalOutcome {
  TerminalEvent event;
  IntentionId node;
  bool synthetic = false;  // reached through a pseudo-node
  bool escalated = false;  // reached by exhausting fallbacks

  bool operator==(const TerminalOutcome&) const = default;
};

using Position = std::variant<IntentionId, TerminalOutcome>;

enum class Direction { bot, user };

/// Matching summary stored on a user turn; `condition` is empty for a
/// fallback.
struct TurnMatch {
  std::optional<Condition> condition;
  double score = 0.0;

  bool operator==(const TurnMatch&) const = default;
};

struct Turn {
  Direction direction = Direction::bot;
  std::string text;
  std::optional<TurnMatch> match;  // user turns only
  Instant at = 0;
  bool synthetic = false;

  bool operator==(const Turn&) const = default;
};

struct Session {
  std::string id;
  std::int64_t table_version = 0;
  Position position;
  std::vector<Turn> transcript;
  int fallback_streak = 0;
  std::optional<std::string> incident_ref;

  bool is_terminal() const { return std::holds_alternative<TerminalOutcome>(position); }
  const TerminalOutcome* outcome() const { return std::get_if<TerminalOutcome>(&position); }
  // Node id for the current position, pseudo-node ids included.
  IntentionId node_id() const;

  bool operator==(const Session&) const = default;
};

struct TurnResult {
  std::string reply;
  bool terminal = false;
  std::optional<TerminalEvent> event;
  bool fallback = false;
  IntentionId intention_id;
};

Json turn_to_json(const Turn& turn);
Turn turn_from_json(const Json& j);
Json position_to_json(const Position& position);
Position position_from_json(const Json& j);
Json session_to_json(const Session& session);
Session session_from_json(const Json& j);
Json turn_result_to_json(const TurnResult& result);

struct EngineOptions {
  int max_fallbacks = 2;
};

/// Callbacks run while the session is locked, so per-session ordering is
/// preserved for whatever they persist.
struct EngineHooks {
  std::function<void(const Session&)> started;
  std::function<void(const Session& before, const IntentionId& node, std::string_view utterance)>
      fallback;
  std::function<void(const Session& after, const Turn& user, const Turn& bot,
                     const TurnResult& result)>
      advanced;
};

/// Runs triage conversations over immutable intention tables. Each session
/// is its own serialization domain; distinct sessions advance in parallel.
class DialogEngine {
 public:
  using Clock = std::function<Instant()>;

  explicit DialogEngine(MatcherConfig matcher, EngineOptions options = {},
                        Clock clock = wall_clock_ms);

  void set_hooks(EngineHooks hooks) { hooks_ = std::move(hooks); }
  const MatcherConfig& matcher() const { return matcher_; }
  const EngineOptions& options() const { return options_; }

  // Throws Error(invalid_table) when the table does not validate or its
  // root is terminal. Returns the new session; its only turn is the prompt.
  Session start_session(std::shared_ptr<const IntentionTable> table,
                        std::optional<std::string> incident_ref = std::nullopt);

  // Errors: unknown_session, session_closed.
  TurnResult advance(const std::string& session_id, std::string_view utterance);

  std::vector<Turn> transcript(const std::string& session_id) const;
  Session snapshot(const std::string& session_id) const;
  std::shared_ptr<const IntentionTable> table_for(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;
  bool contains(const std::string& session_id) const;

  // Re-inserts a recovered session. Replaces any session with the same id.
  void restore(Session session, std::shared_ptr<const IntentionTable> table);

 private:
  struct Slot {
    std::mutex mutex;
    Session session;
    std::shared_ptr<const IntentionTable> table;
  };

  std::shared_ptr<Slot> slot(const std::string& session_id) const;
  Instant stamp(const Session& session) const;

  MatcherConfig matcher_;
  EngineOptions options_;
  Clock clock_;
  EngineHooks hooks_;
  mutable std::shared_mutex sessions_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Slot>> sessions_;
};

enum class Answer { affirmative, negative };

struct PathResult {
  TerminalEvent event;
  std::vector<IntentionId> visited;  // pseudo-nodes included
};

// Walks the table applying answers in order without the matcher. Answers
// left over after a terminal are ignored. Errors: invalid_table,
// answers_exhausted.
PathResult run_path(const IntentionTable& table, std::span<const Answer> answers);

}  // namespace triagebot
