#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "triagebot/dialog_engine.hpp"
#include "triagebot/improvement_loop.hpp"
#include "triagebot/incident_triage.hpp"
#include "triagebot/intention_model.hpp"
#include "triagebot/jsonl.hpp"
#include "triagebot/nlu_matcher.hpp"

namespace triagebot {

struct ServiceConfig {
  // Empty keeps all state in memory.
  std::filesystem::path data_dir;
  MatcherConfig matcher;
  EngineOptions engine;
  std::vector<IncidentType> incident_types;
  std::string notify_url;
  std::string responsible_target = "responsible-group";
  std::string reporting_user_target = "reporting-user";
  std::size_t min_support = kDefaultMinSupport;
  DialogEngine::Clock clock = wall_clock_ms;
};

/// Everything behind the HTTP boundary, wired to the data directory:
///
///   sessions.jsonl       session starts and turns
///   incidents.jsonl      incident openings and lifecycle transitions
///   fallbacks.jsonl      unmatched utterances and their resolution
///   notifications.jsonl  terminal-event notifications
///   samples.jsonl        collected incident samples
///   tables/v<N>.json     every published intention table
///
/// The constructor replays all of it, so a restarted process continues
/// where the previous one stopped.
class TriageService {
 public:
  explicit TriageService(ServiceConfig config);

  struct ImportResult {
    ValidationReport report;
    std::shared_ptr<const IntentionTable> table;  // null unless report.ok
  };

  // Errors: format_error, action_grammar_error. Validation problems are
  // returned in the report and leave the active table unchanged.
  ImportResult import_table(std::string_view text, TableFormat format);
  std::shared_ptr<const IntentionTable> active_table() const { return tables_.active(); }

  // Errors: no_active_table, unknown_incident.
  Session start_session(std::optional<std::string> incident_id = std::nullopt);
  TurnResult post_message(const std::string& session_id, std::string_view text);
  Session session(const std::string& session_id) const { return engine_.snapshot(session_id); }

  Incident open_incident(std::string_view type, std::string description,
                         std::optional<std::string> assigned_group = std::nullopt);
  // Errors: format_error (unknown event name), unknown_incident,
  // illegal_transition.
  Incident incident_event(const std::string& incident_id, std::string_view event,
                          std::optional<std::string> actor = std::nullopt);
  Incident incident(const std::string& incident_id) const { return incidents_.get(incident_id); }

  FallbackReport fallback_report(Instant from, Instant to) const { return loop_.report(from, to); }
  std::vector<Suggestion> suggestions() const { return loop_.suggestions(); }
  std::shared_ptr<const IntentionTable> apply_suggestion(const Suggestion& suggestion,
                                                         const Condition& reviewed);

  const ServiceConfig& config() const { return config_; }
  DialogEngine& engine() { return engine_; }
  TableRegistry& tables() { return tables_; }
  FallbackStore& fallbacks() { return fallbacks_; }
  SampleStore& samples() { return samples_; }
  IncidentRegistry& incidents() { return incidents_; }
  Notifier& notifier() { return notifier_; }

 private:
  std::shared_ptr<JsonlLog> open_log(const char* name) const;
  void recover_sessions();
  void notify(const Session& session, const TerminalEvent& event);

  ServiceConfig config_;
  std::shared_ptr<JsonlLog> session_log_;
  TableRegistry tables_;
  FallbackStore fallbacks_;
  SampleStore samples_;
  IncidentRegistry incidents_;
  Notifier notifier_;
  DialogEngine engine_;
  ImprovementLoop loop_;
};

}  // namespace triagebot
