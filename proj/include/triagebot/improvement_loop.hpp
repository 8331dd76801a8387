#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "triagebot/intention_model.hpp"
#include "triagebot/jsonl.hpp"
#include "triagebot/nlu_matcher.hpp"

namespace triagebot {

struct FallbackRecord {
  std::string id;
  std::string session_id;
  IntentionId intention_id;
  std::string utterance;
  TokenList normalized;
  Instant at = 0;
  bool resolved = false;

  bool operator==(const FallbackRecord&) const = default;
};

Json fallback_to_json(const FallbackRecord& record);

/// Unmatched utterances, persisted to `fallbacks.jsonl`. Resolution is
/// logged as a separate line so the file stays append-only.
class FallbackStore {
 public:
  using Clock = std::function<Instant()>;

  explicit FallbackStore(std::shared_ptr<JsonlLog> log = nullptr, Clock clock = wall_clock_ms);

  // Errors: storage_error.
  FallbackRecord record(const std::string& session_id, const IntentionId& intention_id,
                        std::string_view utterance);
  void mark_resolved(const std::vector<std::string>& record_ids);
  std::vector<FallbackRecord> records() const;
  void recover();

 private:
  std::shared_ptr<JsonlLog> log_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::vector<FallbackRecord> records_;
};

struct UtteranceGroup {
  IntentionId intention_id;
  std::string normalized;  // grouping key
  std::string utterance;   // earliest raw text in the group
  std::size_t count = 0;
  std::vector<std::string> record_ids;
  std::vector<std::string> unresolved_ids;
};

struct FallbackReport {
  Instant from = 0;
  Instant to = 0;
  std::size_t total = 0;
  // Ordered by count descending, then id.
  std::vector<std::pair<IntentionId, std::size_t>> per_intention;
  // Ordered by count descending, then (intention, normalized text).
  std::vector<UtteranceGroup> top_utterances;
};

// Aggregates records with from <= at <= to. Errors: invalid_window.
FallbackReport fallback_report(const std::vector<FallbackRecord>& records, Instant from, Instant to);
Json report_to_json(const FallbackReport& report);

struct Suggestion {
  IntentionId intention_id;
  Condition condition;  // default polarity; the reviewer may override
  std::string phrase;
  std::vector<std::string> supporting_records;
};

Json suggestion_to_json(const Suggestion& suggestion);

inline constexpr std::size_t kDefaultMinSupport = 2;

// One suggestion per (intention, normalized utterance) group with at least
// `min_support` unresolved records. The phrase is the group's raw text.
std::vector<Suggestion> suggest_training_phrases(const FallbackReport& report,
                                                 const IntentionTable& table,
                                                 const MatcherConfig& cfg,
                                                 std::size_t min_support = kDefaultMinSupport);

// Returns a new table, version + 1, with the phrase added to the reviewed
// condition's training phrases. Errors: unknown_intention,
// unknown_condition, conflicting_phrase (the phrase already fully matches a
// different condition of the node), format_error (blank phrase).
IntentionTable apply_suggestion(const IntentionTable& table, const Suggestion& suggestion,
                                const Condition& reviewed, const MatcherConfig& cfg);

/// Every published table version plus the active one. Tables are immutable
/// once published; publishing swaps the active pointer under a lock, so
/// sessions holding an older version are unaffected.
class TableRegistry {
 public:
  // `directory` empty keeps everything in memory.
  explicit TableRegistry(std::filesystem::path directory = {});

  // Validates, assigns version max(table.version, latest + 1), persists as
  // tables/v<N>.json and activates. Errors: invalid_table.
  std::shared_ptr<const IntentionTable> publish(IntentionTable table);

  std::shared_ptr<const IntentionTable> active() const;
  std::shared_ptr<const IntentionTable> version(std::int64_t v) const;
  std::vector<std::int64_t> versions() const;
  void recover();

 private:
  std::filesystem::path directory_;
  mutable std::mutex mutex_;
  std::map<std::int64_t, std::shared_ptr<const IntentionTable>> tables_;
  std::shared_ptr<const IntentionTable> active_;
};

/// Ties the cycle together: report, suggest, reviewed apply.
class ImprovementLoop {
 public:
  ImprovementLoop(TableRegistry& tables, FallbackStore& fallbacks, const MatcherConfig& cfg,
                  std::size_t min_support = kDefaultMinSupport)
      : tables_(tables), fallbacks_(fallbacks), cfg_(cfg), min_support_(min_support) {}

  FallbackReport report(Instant from, Instant to) const;
  // Suggestions over the whole store against the active table.
  std::vector<Suggestion> suggestions() const;
  // Applies to the active table, publishes the result and marks the
  // supporting records resolved. Errors: no_active_table plus those of
  // apply_suggestion.
  std::shared_ptr<const IntentionTable> apply(const Suggestion& suggestion,
                                              const Condition& reviewed);

 private:
  TableRegistry& tables_;
  FallbackStore& fallbacks_;
  const MatcherConfig& cfg_;
  std::size_t min_support_;
};

}  // namespace triagebot
