#include "triagebot/service.hpp"

#include <iostream>
#include <map>

#include "triagebot/error.hpp"

namespace triagebot {

std::shared_ptr<JsonlLog> TriageService::open_log(const char* name) const {
  if (config_.data_dir.empty()) return nullptr;
  return std::make_shared<JsonlLog>(config_.data_dir / name);
}

TriageService::TriageService(ServiceConfig config)
    : config_(std::move(config)),
      session_log_(open_log("sessions.jsonl")),
      tables_(config_.data_dir.empty() ? std::filesystem::path{} : config_.data_dir / "tables"),
      fallbacks_(open_log("fallbacks.jsonl"), config_.clock),
      samples_(open_log("samples.jsonl")),
      incidents_(samples_, open_log("incidents.jsonl"), config_.clock),
      notifier_(open_log("notifications.jsonl"), config_.notify_url, config_.clock),
      engine_(config_.matcher, config_.engine, config_.clock),
      loop_(tables_, fallbacks_, engine_.matcher(), config_.min_support) {
  samples_.seed(config_.incident_types);
  samples_.recover();
  tables_.recover();
  fallbacks_.recover();
  incidents_.recover();
  notifier_.recover();
  recover_sessions();

  EngineHooks hooks;
  hooks.started = [this](const Session& s) {
    if (session_log_) session_log_->append({{"type", "started"}, {"session", session_to_json(s)}});
  };
  hooks.fallback = [this](const Session& s, const IntentionId& node, std::string_view text) {
    fallbacks_.record(s.id, node, text);
  };
  hooks.advanced = [this](const Session& s, const Turn& user, const Turn& bot, const TurnResult&) {
    if (!session_log_) return;
    session_log_->append({{"type", "advanced"},
                          {"session_id", s.id},
                          {"user", turn_to_json(user)},
                          {"bot", turn_to_json(bot)},
                          {"position", position_to_json(s.position)},
                          {"fallback_streak", s.fallback_streak}});
  };
  engine_.set_hooks(std::move(hooks));
}

void TriageService::recover_sessions() {
  if (!session_log_) return;
  std::map<std::string, Session> sessions;
  session_log_->replay([&](const Json& j) {
    const auto kind = j.at("type").get<std::string>();
    if (kind == "started") {
      Session s = session_from_json(j.at("session"));
      sessions[s.id] = std::move(s);
    } else if (kind == "advanced") {
      auto it = sessions.find(j.at("session_id").get<std::string>());
      if (it == sessions.end()) throw Error(Errc::storage_error, "turn for unknown session");
      Session& s = it->second;
      s.transcript.push_back(turn_from_json(j.at("user")));
      s.transcript.push_back(turn_from_json(j.at("bot")));
      s.position = position_from_json(j.at("position"));
      s.fallback_streak = j.at("fallback_streak").get<int>();
    }
  });
  for (auto& [id, s] : sessions) {
    auto table = tables_.version(s.table_version);
    if (!table) {
      throw Error(Errc::storage_error, "session " + id + " needs missing table version " +
                                           std::to_string(s.table_version));
    }
    engine_.restore(std::move(s), std::move(table));
  }
}

TriageService::ImportResult TriageService::import_table(std::string_view text, TableFormat format) {
  IntentionTable table = parse_table(text, format);
  ImportResult result{validate_table(table), nullptr};
  if (result.report.ok) result.table = tables_.publish(std::move(table));
  return result;
}

Session TriageService::start_session(std::optional<std::string> incident_id) {
  auto table = tables_.active();
  if (!table) throw Error(Errc::no_active_table, "import an intention table first");
  if (incident_id && !incidents_.contains(*incident_id)) {
    throw Error(Errc::unknown_incident, "unknown incident " + *incident_id);
  }
  return engine_.start_session(std::move(table), std::move(incident_id));
}

void TriageService::notify(const Session& session, const TerminalEvent& event) {
  const bool to_group = event == TerminalEvent::notify_responsible();
  if (!to_group && event != TerminalEvent::align_user()) return;

  std::string target = to_group ? config_.responsible_target : config_.reporting_user_target;
  std::string summary = "session " + session.id + " ended with " + event.name;
  if (session.incident_ref && incidents_.contains(*session.incident_ref)) {
    const Incident incident = incidents_.get(*session.incident_ref);
    if (to_group && incident.assigned_group) target = *incident.assigned_group;
    summary += " for incident " + incident.id + " (" + incident.type.name + ")";
  }
  try {
    notifier_.dispatch(event, session.id, session.incident_ref, target, summary);
  } catch (const ChannelUnavailable& e) {
    std::cerr << "triagebot: notification not delivered: " << e.what() << "\n";
  }
}

TurnResult TriageService::post_message(const std::string& session_id, std::string_view text) {
  TurnResult result = engine_.advance(session_id, text);
  if (result.terminal && result.event) notify(engine_.snapshot(session_id), *result.event);
  return result;
}

Incident TriageService::open_incident(std::string_view type, std::string description,
                                      std::optional<std::string> assigned_group) {
  return incidents_.open(type, std::move(description), std::move(assigned_group));
}

Incident TriageService::incident_event(const std::string& incident_id, std::string_view event,
                                       std::optional<std::string> actor) {
  auto parsed = parse_event(event);
  if (!parsed) throw Error(Errc::format_error, "unknown lifecycle event \"" + std::string(event) + "\"");
  return incidents_.apply(incident_id, *parsed, std::move(actor));
}

std::shared_ptr<const IntentionTable> TriageService::apply_suggestion(const Suggestion& suggestion,
                                                                      const Condition& reviewed) {
  return loop_.apply(suggestion, reviewed);
}

}  // namespace triagebot
