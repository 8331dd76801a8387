#include "triagebot/incident_triage.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

#include <httplib.h>

#include "triagebot/csv.hpp"
#include "triagebot/error.hpp"

namespace triagebot {

namespace {

std::string trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

Json optional_string(const std::optional<std::string>& value) {
  return value ? Json(*value) : Json(nullptr);
}

std::optional<std::string> optional_string(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::string>();
}

}  // namespace

std::vector<IncidentType> parse_incident_types(std::string_view csv_text) {
  auto records = csv::parse(csv_text);
  if (records.empty() || records.front() != csv::Record{"sample", "description"}) {
    throw Error(Errc::format_error, "incident types need the header \"sample,description\"");
  }
  std::vector<IncidentType> types;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].size() != 2) {
      throw Error(Errc::format_error, "incident types line " + std::to_string(i + 1) +
                                          ": expected 2 fields");
    }
    types.push_back({trimmed(records[i][0]), trimmed(records[i][1])});
  }
  return types;
}

std::vector<IncidentType> load_incident_types(const std::filesystem::path& path) {
  return parse_incident_types(read_file(path));
}

std::string_view to_string(LifecycleState state) {
  switch (state) {
    case LifecycleState::reported: return "Reported";
    case LifecycleState::triaged: return "Triaged";
    case LifecycleState::assigned: return "Assigned";
    case LifecycleState::correction_applied: return "CorrectionApplied";
    case LifecycleState::under_validation: return "UnderValidation";
    case LifecycleState::resolved: return "Resolved";
    case LifecycleState::reopened: return "Reopened";
    case LifecycleState::closed: return "Closed";
  }
  return "?";
}

std::string_view to_string(LifecycleEvent event) {
  switch (event) {
    case LifecycleEvent::triaged: return "triaged";
    case LifecycleEvent::assigned: return "assigned";
    case LifecycleEvent::correction_applied: return "correction_applied";
    case LifecycleEvent::validation_started: return "validation_started";
    case LifecycleEvent::validated_ok: return "validated_ok";
    case LifecycleEvent::validated_fail: return "validated_fail";
    case LifecycleEvent::closed: return "closed";
  }
  return "?";
}

std::optional<LifecycleState> parse_state(std::string_view text) {
  for (auto s : kAllStates)
    if (to_string(s) == text) return s;
  return std::nullopt;
}

std::optional<LifecycleEvent> parse_event(std::string_view text) {
  for (auto e : kAllEvents)
    if (to_string(e) == text) return e;
  return std::nullopt;
}

std::optional<LifecycleState> next_state(LifecycleState from, LifecycleEvent event) {
  using S = LifecycleState;
  using E = LifecycleEvent;
  switch (from) {
    case S::reported:
      if (event == E::triaged) return S::triaged;
      break;
    case S::triaged:
      if (event == E::assigned) return S::assigned;
      break;
    case S::assigned:
      if (event == E::correction_applied) return S::correction_applied;
      break;
    case S::correction_applied:
      if (event == E::validation_started) return S::under_validation;
      break;
    case S::under_validation:
      if (event == E::validated_ok) return S::resolved;
      if (event == E::validated_fail) return S::reopened;
      break;
    case S::reopened:
      if (event == E::assigned) return S::assigned;
      break;
    case S::resolved:
      if (event == E::closed) return S::closed;
      break;
    case S::closed:
      break;
  }
  return std::nullopt;
}

Incident transition(const Incident& incident, LifecycleEvent event, Instant at,
                    std::optional<std::string> actor) {
  auto next = next_state(incident.state, event);
  if (!next) {
    throw Error(Errc::illegal_transition, "event " + std::string(to_string(event)) +
                                              " is not allowed in state " +
                                              std::string(to_string(incident.state)));
  }
  Incident out = incident;
  out.state = *next;
  if (!out.history.empty()) at = std::max(at, out.history.back().at);
  out.history.push_back({*next, event, at, std::move(actor)});
  return out;
}

Json incident_to_json(const Incident& incident) {
  Json history = Json::array();
  for (const auto& h : incident.history) {
    history.push_back({{"state", to_string(h.state)},
                       {"event", h.event ? Json(to_string(*h.event)) : Json(nullptr)},
                       {"at", h.at},
                       {"actor", optional_string(h.actor)}});
  }
  return {{"incident_id", incident.id},
          {"type", incident.type.name},
          {"type_description", incident.type.description},
          {"description", incident.description},
          {"state", to_string(incident.state)},
          {"assigned_group", optional_string(incident.assigned_group)},
          {"history", std::move(history)}};
}

Incident incident_from_json(const Json& j) {
  Incident incident;
  incident.id = j.at("incident_id").get<std::string>();
  incident.type = {j.at("type").get<std::string>(), j.at("type_description").get<std::string>()};
  incident.description = j.at("description").get<std::string>();
  incident.state = parse_state(j.at("state").get<std::string>()).value();
  incident.assigned_group = optional_string(j.at("assigned_group"));
  for (const auto& h : j.at("history")) {
    HistoryEntry entry{parse_state(h.at("state").get<std::string>()).value(), std::nullopt,
                       h.at("at").get<Instant>(), optional_string(h.at("actor"))};
    if (!h.at("event").is_null()) entry.event = parse_event(h.at("event").get<std::string>());
    incident.history.push_back(std::move(entry));
  }
  return incident;
}

// --- SampleStore ------------------------------------------------------------

void SampleStore::register_type(IncidentType type) {
  std::unique_lock lock(mutex_);
  auto it = std::find_if(types_.begin(), types_.end(),
                         [&](const IncidentType& t) { return t.name == type.name; });
  if (it == types_.end()) {
    types_.push_back(std::move(type));
  } else {
    *it = std::move(type);
  }
}

void SampleStore::seed(const std::vector<IncidentType>& types) {
  for (const auto& type : types) {
    register_type(type);
    std::unique_lock lock(mutex_);
    samples_.push_back({"seed-" + std::to_string(samples_.size() + 1), type.name,
                        type.description, "seed"});
  }
}

void SampleStore::recover() {
  if (!log_) return;
  log_->replay([&](const Json& j) {
    std::unique_lock lock(mutex_);
    samples_.push_back({j.at("id").get<std::string>(), j.at("incident_type").get<std::string>(),
                        j.at("text").get<std::string>(), j.at("source").get<std::string>()});
  });
}

bool SampleStore::has_type(std::string_view name) const { return type(name).has_value(); }

std::optional<IncidentType> SampleStore::type(std::string_view name) const {
  std::shared_lock lock(mutex_);
  for (const auto& t : types_)
    if (t.name == name) return t;
  return std::nullopt;
}

std::vector<IncidentType> SampleStore::types() const {
  std::shared_lock lock(mutex_);
  return types_;
}

std::vector<SampleStore::Sample> SampleStore::samples() const {
  std::shared_lock lock(mutex_);
  return samples_;
}

std::string SampleStore::record_sample(std::string incident_type, std::string text,
                                       std::string source) {
  if (trimmed(text).empty()) throw Error(Errc::invalid_sample, "sample text must not be empty");
  if (!has_type(incident_type)) {
    throw Error(Errc::unknown_type, "unknown incident type \"" + incident_type + "\"");
  }
  Sample sample{"smp-" + random_token(), std::move(incident_type), std::move(text),
                std::move(source)};
  std::unique_lock lock(mutex_);
  if (log_) {
    log_->append({{"id", sample.id},
                  {"incident_type", sample.incident_type},
                  {"text", sample.text},
                  {"source", sample.source}});
  }
  samples_.push_back(sample);
  return sample.id;
}

MatchResult<std::string> classify_incident_type(std::string_view utterance,
                                                const SampleStore& samples,
                                                const MatcherConfig& cfg) {
  const auto all = samples.samples();
  if (all.empty()) throw Error(Errc::empty_store, "no incident samples recorded");

  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  for (const auto& type : samples.types()) groups.push_back({type.name, {}});
  for (const auto& sample : all) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == sample.incident_type; });
    if (it != groups.end()) it->second.push_back(sample.text);
  }
  return classify_against(normalize(utterance), groups, cfg.threshold);
}

// --- IncidentRegistry -------------------------------------------------------

IncidentRegistry::IncidentRegistry(const SampleStore& types, std::shared_ptr<JsonlLog> log,
                                   Clock clock)
    : types_(types), log_(std::move(log)), clock_(std::move(clock)) {}

Incident IncidentRegistry::open(std::string_view type_name, std::string description,
                                std::optional<std::string> assigned_group) {
  auto type = types_.type(type_name);
  if (!type) throw Error(Errc::unknown_type, "unknown incident type \"" + std::string(type_name) + "\"");

  auto fresh = std::make_shared<Slot>();
  Incident& incident = fresh->incident;
  incident.id = "inc-" + random_token();
  incident.type = *type;
  incident.description = std::move(description);
  incident.assigned_group = std::move(assigned_group);
  incident.history.push_back({LifecycleState::reported, std::nullopt, clock_(), std::nullopt});

  std::unique_lock lock(mutex_);
  if (log_) log_->append({{"type", "opened"}, {"incident", incident_to_json(incident)}});
  incidents_[incident.id] = fresh;
  return incident;
}

std::shared_ptr<IncidentRegistry::Slot> IncidentRegistry::slot(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = incidents_.find(id);
  if (it == incidents_.end()) throw Error(Errc::unknown_incident, "unknown incident " + id);
  return it->second;
}

Incident IncidentRegistry::apply(const std::string& incident_id, LifecycleEvent event,
                                 std::optional<std::string> actor) {
  auto s = slot(incident_id);
  std::lock_guard lock(s->mutex);
  Incident next = transition(s->incident, event, clock_(), std::move(actor));
  if (log_) {
    const auto& h = next.history.back();
    log_->append({{"type", "transition"},
                  {"incident_id", incident_id},
                  {"event", to_string(event)},
                  {"at", h.at},
                  {"actor", optional_string(h.actor)}});
  }
  s->incident = std::move(next);
  return s->incident;
}

Incident IncidentRegistry::get(const std::string& incident_id) const {
  auto s = slot(incident_id);
  std::lock_guard lock(s->mutex);
  return s->incident;
}

bool IncidentRegistry::contains(const std::string& incident_id) const {
  std::shared_lock lock(mutex_);
  return incidents_.contains(incident_id);
}

std::vector<Incident> IncidentRegistry::all() const {
  std::vector<std::shared_ptr<Slot>> slots;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [_, s] : incidents_) slots.push_back(s);
  }
  std::vector<Incident> out;
  for (const auto& s : slots) {
    std::lock_guard lock(s->mutex);
    out.push_back(s->incident);
  }
  return out;
}

void IncidentRegistry::recover() {
  if (!log_) return;
  log_->replay([&](const Json& j) {
    const auto kind = j.at("type").get<std::string>();
    if (kind == "opened") {
      auto fresh = std::make_shared<Slot>();
      fresh->incident = incident_from_json(j.at("incident"));
      std::unique_lock lock(mutex_);
      incidents_[fresh->incident.id] = fresh;
    } else if (kind == "transition") {
      auto s = slot(j.at("incident_id").get<std::string>());
      auto event = parse_event(j.at("event").get<std::string>());
      if (!event) throw Error(Errc::storage_error, "unknown lifecycle event in journal");
      s->incident = transition(s->incident, *event, j.at("at").get<Instant>(),
                               optional_string(j.at("actor")));
    }
  });
}

// --- Notifier ---------------------------------------------------------------

Json notification_to_json(const NotificationRecord& r) {
  return {{"id", r.id},
          {"event", r.event},
          {"session_id", r.session_id},
          {"incident_id", optional_string(r.incident_id)},
          {"target", r.target},
          {"audience", r.audience},
          {"channel", r.channel == Channel::webhook ? "webhook" : "log"},
          {"delivered", r.delivered},
          {"payload", r.payload}};
}

NotificationRecord notification_from_json(const Json& j) {
  NotificationRecord r;
  r.id = j.at("id").get<std::string>();
  r.event = j.at("event").get<std::string>();
  r.session_id = j.at("session_id").get<std::string>();
  r.incident_id = optional_string(j.at("incident_id"));
  r.target = j.at("target").get<std::string>();
  r.audience = j.at("audience").get<std::string>();
  r.channel = j.at("channel").get<std::string>() == "webhook" ? Channel::webhook : Channel::log;
  r.delivered = j.at("delivered").get<bool>();
  r.payload = j.at("payload").get<std::string>();
  return r;
}

Notifier::Notifier(std::shared_ptr<JsonlLog> log, std::string webhook_url, Clock clock)
    : log_(std::move(log)), webhook_url_(std::move(webhook_url)), clock_(std::move(clock)) {}

bool Notifier::post(const std::string& body) const {
  std::string base = webhook_url_;
  std::string path = "/";
  if (auto scheme = base.find("://"); scheme != std::string::npos) {
    if (auto slash = base.find('/', scheme + 3); slash != std::string::npos) {
      path = base.substr(slash);
      base = base.substr(0, slash);
    }
  }
  httplib::Client client(base);
  client.set_connection_timeout(2, 0);
  client.set_read_timeout(5, 0);
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto res = client.Post(path, body, "application/json");
    if (res && res->status >= 200 && res->status < 300) return true;
  }
  return false;
}

NotificationRecord Notifier::dispatch(const TerminalEvent& event, const std::string& session_id,
                                      const std::optional<std::string>& incident_id,
                                      const std::string& target, const std::string& summary) {
  const bool to_group = event == TerminalEvent::notify_responsible();
  if (!to_group && event != TerminalEvent::align_user()) {
    throw Error(Errc::format_error, "no notification for terminal event " + event.name);
  }

  std::lock_guard lock(mutex_);
  for (const auto& r : records_)
    if (r.session_id == session_id && r.event == event.name) return r;

  NotificationRecord record;
  record.id = "ntf-" + random_token();
  record.event = event.name;
  record.session_id = session_id;
  record.incident_id = incident_id;
  record.target = target;
  record.audience = to_group ? "support_group" : "reporting_user";
  record.channel = webhook_url_.empty() ? Channel::log : Channel::webhook;
  record.payload = Json{{"event", event.name},
                        {"session_id", session_id},
                        {"incident_id", optional_string(incident_id)},
                        {"target", target},
                        {"summary", summary},
                        {"timestamp", clock_()}}
                       .dump();
  record.delivered = record.channel == Channel::log ? true : post(record.payload);

  if (log_) log_->append(notification_to_json(record));
  records_.push_back(record);
  if (!record.delivered) {
    throw ChannelUnavailable(record, "webhook " + webhook_url_ + " unreachable after retry");
  }
  return record;
}

std::vector<NotificationRecord> Notifier::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

void Notifier::recover() {
  if (!log_) return;
  log_->replay([&](const Json& j) {
    std::lock_guard lock(mutex_);
    records_.push_back(notification_from_json(j));
  });
}

}  // namespace triagebot
