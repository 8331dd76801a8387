#include "triagebot/improvement_loop.hpp"

#include <algorithm>
#include <limits>
#include <regex>
#include <set>

#include "triagebot/error.hpp"

namespace triagebot {

Json fallback_to_json(const FallbackRecord& r) {
  return {{"id", r.id},
          {"session_id", r.session_id},
          {"intention_id", r.intention_id.str()},
          {"utterance", r.utterance},
          {"normalized", r.normalized.tokens},
          {"at", r.at},
          {"resolved", r.resolved}};
}

FallbackStore::FallbackStore(std::shared_ptr<JsonlLog> log, Clock clock)
    : log_(std::move(log)), clock_(std::move(clock)) {}

FallbackRecord FallbackStore::record(const std::string& session_id,
                                     const IntentionId& intention_id,
                                     std::string_view utterance) {
  FallbackRecord r{"fb-" + random_token(), session_id, intention_id, std::string(utterance),
                   normalize(utterance), clock_(), false};
  std::lock_guard lock(mutex_);
  if (log_) {
    Json line = fallback_to_json(r);
    line["type"] = "fallback";
    log_->append(line);
  }
  records_.push_back(r);
  return r;
}

void FallbackStore::mark_resolved(const std::vector<std::string>& record_ids) {
  std::lock_guard lock(mutex_);
  for (const auto& id : record_ids) {
    auto it = std::find_if(records_.begin(), records_.end(),
                           [&](const FallbackRecord& r) { return r.id == id; });
    if (it == records_.end() || it->resolved) continue;
    if (log_) log_->append({{"type", "resolved"}, {"id", id}});
    it->resolved = true;
  }
}

std::vector<FallbackRecord> FallbackStore::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

void FallbackStore::recover() {
  if (!log_) return;
  log_->replay([&](const Json& j) {
    std::lock_guard lock(mutex_);
    if (j.at("type") == "fallback") {
      FallbackRecord r;
      r.id = j.at("id").get<std::string>();
      r.session_id = j.at("session_id").get<std::string>();
      r.intention_id = IntentionId::parse(j.at("intention_id").get<std::string>());
      r.utterance = j.at("utterance").get<std::string>();
      r.normalized.tokens = j.at("normalized").get<std::vector<std::string>>();
      r.at = j.at("at").get<Instant>();
      r.resolved = j.at("resolved").get<bool>();
      records_.push_back(std::move(r));
    } else if (j.at("type") == "resolved") {
      const auto id = j.at("id").get<std::string>();
      for (auto& r : records_)
        if (r.id == id) r.resolved = true;
    }
  });
}

FallbackReport fallback_report(const std::vector<FallbackRecord>& records, Instant from,
                               Instant to) {
  if (from > to) throw Error(Errc::invalid_window, "report window has from > to");
  FallbackReport report;
  report.from = from;
  report.to = to;

  std::map<IntentionId, std::size_t> counts;
  std::map<std::pair<IntentionId, std::string>, UtteranceGroup> groups;
  for (const auto& r : records) {
    if (r.at < from || r.at > to) continue;
    ++report.total;
    ++counts[r.intention_id];
    auto key = std::make_pair(r.intention_id, r.normalized.joined());
    auto& g = groups[key];
    if (g.count == 0) {
      g.intention_id = r.intention_id;
      g.normalized = key.second;
      g.utterance = r.utterance;
    }
    ++g.count;
    g.record_ids.push_back(r.id);
    if (!r.resolved) g.unresolved_ids.push_back(r.id);
  }

  report.per_intention.assign(counts.begin(), counts.end());
  std::stable_sort(report.per_intention.begin(), report.per_intention.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [_, g] : groups) report.top_utterances.push_back(std::move(g));
  std::stable_sort(report.top_utterances.begin(), report.top_utterances.end(),
                   [](const auto& a, const auto& b) { return a.count > b.count; });
  return report;
}

Json report_to_json(const FallbackReport& report) {
  Json counts = Json::object();
  Json per_intention = Json::array();
  for (const auto& [id, n] : report.per_intention) {
    counts[id.str()] = n;
    per_intention.push_back({{"intention_id", id.str()}, {"count", n}});
  }
  Json top = Json::array();
  for (const auto& g : report.top_utterances) {
    top.push_back({{"intention_id", g.intention_id.str()},
                   {"utterance", g.utterance},
                   {"normalized", g.normalized},
                   {"count", g.count},
                   {"unresolved", g.unresolved_ids.size()}});
  }
  return {{"from", report.from},     {"to", report.to},
          {"total", report.total},   {"counts", std::move(counts)},
          {"per_intention", std::move(per_intention)}, {"top_utterances", std::move(top)}};
}

Json suggestion_to_json(const Suggestion& s) {
  return {{"intention_id", s.intention_id.str()},
          {"condition", s.condition.label()},
          {"phrase", s.phrase},
          {"supporting_records", s.supporting_records}};
}

namespace {

double best_score(const TokenList& tokens, const std::vector<std::string>& phrases) {
  double best = 0.0;
  for (const auto& p : phrases) best = std::max(best, score(tokens, normalize(p)));
  return best;
}

std::string trim_copy(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

std::vector<Suggestion> suggest_training_phrases(const FallbackReport& report,
                                                 const IntentionTable& table,
                                                 const MatcherConfig& cfg,
                                                 std::size_t min_support) {
  std::vector<Suggestion> out;
  for (const auto& g : report.top_utterances) {
    if (g.unresolved_ids.size() < std::max<std::size_t>(min_support, 1)) continue;
    if (g.normalized.empty()) continue;
    const Intention* node = table.find(g.intention_id);
    if (!node || node->is_terminal()) continue;

    const TokenList tokens = normalize(g.utterance);
    double affirmative = 0.0;
    double negative = 0.0;
    bool already_known = false;
    for (const auto& [condition, phrases] : condition_phrase_groups(*node, cfg)) {
      const double s = best_score(tokens, phrases);
      if (s >= 1.0) already_known = true;
      if (condition.kind == Condition::Kind::affirmative) affirmative = s;
      if (condition.kind == Condition::Kind::negative) negative = s;
    }
    if (already_known) continue;

    out.push_back({g.intention_id,
                   negative > affirmative ? Condition::negative() : Condition::affirmative(),
                   trim_copy(g.utterance), g.unresolved_ids});
  }
  return out;
}

IntentionTable apply_suggestion(const IntentionTable& table, const Suggestion& suggestion,
                                const Condition& reviewed, const MatcherConfig& cfg) {
  const Intention* node = table.find(suggestion.intention_id);
  if (!node) {
    throw Error(Errc::unknown_intention, "no intention " + suggestion.intention_id.str());
  }
  if (!node->has_condition(reviewed)) {
    throw Error(Errc::unknown_condition,
                node->id.str() + " has no \"" + reviewed.label() + "\" condition");
  }
  const std::string phrase = trim_copy(suggestion.phrase);
  const TokenList tokens = normalize(phrase);
  if (tokens.empty()) throw Error(Errc::format_error, "training phrase is blank");

  for (const auto& [condition, phrases] : condition_phrase_groups(*node, cfg)) {
    if (condition == reviewed) continue;
    if (best_score(tokens, phrases) >= 1.0) {
      throw Error(Errc::conflicting_phrase, "\"" + phrase + "\" already means \"" +
                                                condition.label() + "\" at " + node->id.str());
    }
  }

  IntentionTable next = table;
  next.version = table.version + 1;
  auto& bucket = next.find(node->id)->training_phrases[reviewed.label()];
  if (std::find(bucket.begin(), bucket.end(), phrase) == bucket.end()) bucket.push_back(phrase);
  return next;
}

// --- TableRegistry ----------------------------------------------------------

TableRegistry::TableRegistry(std::filesystem::path directory) : directory_(std::move(directory)) {}

std::shared_ptr<const IntentionTable> TableRegistry::publish(IntentionTable table) {
  if (!validate_table(table).ok) throw Error(Errc::invalid_table, "refusing to publish an invalid table");
  std::lock_guard lock(mutex_);
  const std::int64_t latest = tables_.empty() ? 0 : tables_.rbegin()->first;
  table.version = std::max(table.version, latest + 1);
  if (!directory_.empty()) {
    write_file_atomically(directory_ / ("v" + std::to_string(table.version) + ".json"),
                          export_table(table, TableFormat::json));
  }
  auto published = std::make_shared<const IntentionTable>(std::move(table));
  tables_[published->version] = published;
  active_ = published;
  return published;
}

std::shared_ptr<const IntentionTable> TableRegistry::active() const {
  std::lock_guard lock(mutex_);
  return active_;
}

std::shared_ptr<const IntentionTable> TableRegistry::version(std::int64_t v) const {
  std::lock_guard lock(mutex_);
  auto it = tables_.find(v);
  return it == tables_.end() ? nullptr : it->second;
}

std::vector<std::int64_t> TableRegistry::versions() const {
  std::lock_guard lock(mutex_);
  std::vector<std::int64_t> out;
  for (const auto& [v, _] : tables_) out.push_back(v);
  return out;
}

void TableRegistry::recover() {
  if (directory_.empty() || !std::filesystem::exists(directory_)) return;
  static const std::regex name(R"(v(\d+)\.json)");
  std::lock_guard lock(mutex_);
  for (const auto& entry : std::filesystem::directory_iterator(directory_)) {
    std::smatch m;
    const std::string file = entry.path().filename().string();
    if (!std::regex_match(file, m, name)) continue;
    auto table = parse_table(read_file(entry.path()), TableFormat::json);
    if (table.version != std::stoll(m[1].str())) {
      throw Error(Errc::storage_error, file + " holds version " + std::to_string(table.version));
    }
    tables_[table.version] = std::make_shared<const IntentionTable>(std::move(table));
  }
  if (!tables_.empty()) active_ = tables_.rbegin()->second;
}

// --- ImprovementLoop --------------------------------------------------------

FallbackReport ImprovementLoop::report(Instant from, Instant to) const {
  return fallback_report(fallbacks_.records(), from, to);
}

std::vector<Suggestion> ImprovementLoop::suggestions() const {
  auto table = tables_.active();
  if (!table) return {};
  return suggest_training_phrases(report(std::numeric_limits<Instant>::min(),
                                         std::numeric_limits<Instant>::max()),
                                  *table, cfg_, min_support_);
}

std::shared_ptr<const IntentionTable> ImprovementLoop::apply(const Suggestion& suggestion,
                                                             const Condition& reviewed) {
  auto table = tables_.active();
  if (!table) throw Error(Errc::no_active_table, "no active table to improve");
  auto published = tables_.publish(apply_suggestion(*table, suggestion, reviewed, cfg_));
  fallbacks_.mark_resolved(suggestion.supporting_records);
  return published;
}

}  // namespace triagebot
