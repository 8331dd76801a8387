#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "triagebot/error.hpp"
#include "triagebot/intention_model.hpp"
#include "triagebot/jsonl.hpp"
#include "triagebot/nlu_matcher.hpp"

namespace triagebot {

struct IncidentType {
  std::string name;
  std::string description;

  bool operator==(const IncidentType&) const = default;
};

// Reads the "sample,description" CSV shipped as data/incident_types.csv.
std::vector<IncidentType> load_incident_types(const std::filesystem::path& path);
std::vector<IncidentType> parse_incident_types(std::string_view csv_text);

// ---------------------------------------------------------------------------
// Resolution lifecycle
//
//   Reported -> Triaged -> Assigned -> CorrectionApplied -> UnderValidation
//   UnderValidation -> Resolved | Reopened
//   Reopened -> Assigned
//   Resolved -> Closed            (Closed is absorbing)

enum class LifecycleState {
  reported,
  triaged,
  assigned,
  correction_applied,
  under_validation,
  resolved,
  reopened,
  closed,
};

enum class LifecycleEvent {
  triaged,
  assigned,
  correction_applied,
  validation_started,
  validated_ok,
  validated_fail,
  closed,
};

inline constexpr LifecycleState kAllStates[] = {
    LifecycleState::reported,         LifecycleState::triaged,  LifecycleState::assigned,
    LifecycleState::correction_applied, LifecycleState::under_validation,
    LifecycleState::resolved,         LifecycleState::reopened, LifecycleState::closed};

inline constexpr LifecycleEvent kAllEvents[] = {
    LifecycleEvent::triaged,      LifecycleEvent::assigned,       LifecycleEvent::correction_applied,
    LifecycleEvent::validation_started, LifecycleEvent::validated_ok,
    LifecycleEvent::validated_fail, LifecycleEvent::closed};

std::string_view to_string(LifecycleState state);
std::string_view to_string(LifecycleEvent event);
std::optional<LifecycleState> parse_state(std::string_view text);
std::optional<LifecycleEvent> parse_event(std::string_view text);

// Empty when the event is not legal from `from`.
std::optional<LifecycleState> next_state(LifecycleState from, LifecycleEvent event);

struct HistoryEntry {
  LifecycleState state;
  std::optional<LifecycleEvent> event;  // empty for the opening entry
  Instant at = 0;
  std::optional<std::string> actor;     // who validated: analyst or end user

  bool operator==(const HistoryEntry&) const = default;
};

struct Incident {
  std::string id;
  IncidentType type;
  std::string description;
  LifecycleState state = LifecycleState::reported;
  std::vector<HistoryEntry> history;
  std::optional<std::string> assigned_group;

  bool operator==(const Incident&) const = default;
};

Json incident_to_json(const Incident& incident);
Incident incident_from_json(const Json& j);

// Pure lifecycle step. Throws Error(illegal_transition) naming the
// state/event pair.
Incident transition(const Incident& incident, LifecycleEvent event, Instant at,
                     std::optional<std::string> actor = std::nullopt);

/// Registered incident types plus the samples that describe them.
class SampleStore {
 public:
  struct Sample {
    std::string id;
    std::string incident_type;
    std::string text;
    std::string source;  // "seed" or "collected"

    bool operator==(const Sample&) const = default;
  };

  SampleStore() = default;
  // Persists collected samples to `log` (seeds are not logged; they reload
  // from the seed file on every start).
  explicit SampleStore(std::shared_ptr<JsonlLog> log) : log_(std::move(log)) {}

  void register_type(IncidentType type);
  // Registers every type and stores its description as a seed sample.
  void seed(const std::vector<IncidentType>& types);
  // Reloads collected samples from the log.
  void recover();

  bool has_type(std::string_view name) const;
  std::optional<IncidentType> type(std::string_view name) const;
  std::vector<IncidentType> types() const;
  std::vector<Sample> samples() const;

  // Errors: unknown_type, invalid_sample (blank text).
  std::string record_sample(std::string incident_type, std::string text,
                            std::string source = "collected");

 private:
  mutable std::shared_mutex mutex_;
  std::vector<IncidentType> types_;
  std::vector<Sample> samples_;
  std::shared_ptr<JsonlLog> log_;
};

// Best incident type for a free-text description, scored with the same
// Jaccard rule as condition matching. Errors: empty_store.
MatchResult<std::string> classify_incident_type(std::string_view utterance,
                                                const SampleStore& samples,
                                                const MatcherConfig& cfg);

/// Incident records with per-incident serialization and an append-only
/// journal (`incidents.jsonl`).
class IncidentRegistry {
 public:
  using Clock = std::function<Instant()>;

  IncidentRegistry(const SampleStore& types, std::shared_ptr<JsonlLog> log = nullptr,
                   Clock clock = wall_clock_ms);

  // Errors: unknown_type.
  Incident open(std::string_view type_name, std::string description,
                std::optional<std::string> assigned_group = std::nullopt);
  // Errors: unknown_incident, illegal_transition.
  Incident apply(const std::string& incident_id, LifecycleEvent event,
                 std::optional<std::string> actor = std::nullopt);
  Incident get(const std::string& incident_id) const;
  bool contains(const std::string& incident_id) const;
  std::vector<Incident> all() const;

  void recover();

 private:
  struct Slot {
    std::mutex mutex;
    Incident incident;
  };
  std::shared_ptr<Slot> slot(const std::string& id) const;

  const SampleStore& types_;
  std::shared_ptr<JsonlLog> log_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>> incidents_;
};

// ---------------------------------------------------------------------------
// Notifications for terminal events

enum class Channel { log, webhook };

struct NotificationRecord {
  std::string id;
  std::string event;
  std::string session_id;
  std::optional<std::string> incident_id;
  std::string target;
  std::string audience;  // "support_group" or "reporting_user"
  Channel channel = Channel::log;
  bool delivered = false;
  std::string payload;  // JSON text sent or logged

  bool operator==(const NotificationRecord&) const = default;
};

Json notification_to_json(const NotificationRecord& record);
NotificationRecord notification_from_json(const Json& j);

/// Thrown when the webhook is unreachable after its retry. The record was
/// persisted with delivered=false before the throw.
class ChannelUnavailable : public Error {
 public:
  ChannelUnavailable(NotificationRecord record, const std::string& message)
      : Error(Errc::channel_unavailable, message), record_(std::move(record)) {}
  const NotificationRecord& record() const { return record_; }

 private:
  NotificationRecord record_;
};

/// Sends NotifyResponsible / AlignUser notifications. Idempotent per
/// (session id, event): a repeated dispatch returns the first record.
class Notifier {
 public:
  using Clock = std::function<Instant()>;

  // `webhook_url` empty selects the log channel. The log is always written.
  Notifier(std::shared_ptr<JsonlLog> log, std::string webhook_url = {},
           Clock clock = wall_clock_ms);

  // Throws Error(format_error) for events other than NotifyResponsible and
  // AlignUser, and ChannelUnavailable when the webhook fails twice.
  NotificationRecord dispatch(const TerminalEvent& event, const std::string& session_id,
                              const std::optional<std::string>& incident_id,
                              const std::string& target, const std::string& summary = {});

  std::vector<NotificationRecord> records() const;
  void recover();

 private:
  bool post(const std::string& body) const;

  std::shared_ptr<JsonlLog> log_;
  std::string webhook_url_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::vector<NotificationRecord> records_;
};

}  // namespace triagebot
