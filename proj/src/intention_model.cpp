#include "triagebot/intention_model.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>
#include <unordered_map>

#include "triagebot/csv.hpp"
#include "triagebot/error.hpp"

namespace triagebot {

namespace {

constexpr std::string_view kCsvHeader[] = {"intention", "response", "condition", "action"};
constexpr std::string_view kActionPrefix = "proceed for intention ";
constexpr std::string_view kNumberedPrefix = "intention-";

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(),
                                   [](unsigned char c) { return std::isdigit(c) != 0; });
}

IntentionId parse_action(std::string_view text, std::size_t line) {
  const std::string action = lower(trim(text));
  if (action.starts_with(kActionPrefix)) {
    std::string_view digits = std::string_view(action).substr(kActionPrefix.size());
    if (all_digits(digits)) return IntentionId::parse("intention-" + std::string(digits));
  }
  throw Error(Errc::action_grammar_error, "line " + std::to_string(line) + ": action \"" +
                                              std::string(text) +
                                              "\" is not of the form \"Proceed for intention NN\"");
}

// Unique intention with no incoming ProceedTo edge, in declaration order.
std::vector<IntentionId> zero_in_degree(const IntentionTable& table) {
  std::set<IntentionId> referenced;
  for (const auto& intention : table.intentions)
    for (const auto& row : intention.rows)
      if (row.target) referenced.insert(*row.target);
  std::vector<IntentionId> out;
  for (const auto& intention : table.intentions)
    if (!referenced.contains(intention.id)) out.push_back(intention.id);
  return out;
}

void infer_root(IntentionTable& table) {
  auto roots = zero_in_degree(table);
  if (!roots.empty()) table.root = roots.front();
}

void assign_derived_events(IntentionTable& table) {
  for (auto& intention : table.intentions)
    if (intention.is_terminal() && !intention.terminal_event)
      intention.terminal_event = TerminalEvent::from_response(intention.response);
}

Intention& intention_for(IntentionTable& table, const IntentionId& id,
                         const std::string& response) {
  if (auto* found = table.find(id)) return *found;
  Intention fresh;
  fresh.id = id;
  fresh.response = response;
  table.intentions.push_back(std::move(fresh));
  return table.intentions.back();
}

IntentionTable parse_csv(std::string_view text) {
  std::vector<csv::Record> records = csv::parse(text);
  if (records.empty()) throw Error(Errc::format_error, "empty document");

  const auto& header = records.front();
  if (!std::equal(header.begin(), header.end(), std::begin(kCsvHeader), std::end(kCsvHeader))) {
    throw Error(Errc::format_error,
                "header must be exactly \"intention,response,condition,action\"");
  }

  IntentionTable table;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& record = records[i];
    const std::size_t line = i + 1;
    if (record.size() != 4) {
      throw Error(Errc::format_error, "line " + std::to_string(line) + ": expected 4 fields, got " +
                                          std::to_string(record.size()));
    }
    TransitionRow row;
    row.intention = IntentionId::parse(record[0]);
    row.response = trim(record[1]);
    const std::string condition = trim(record[2]);
    const std::string action = trim(record[3]);
    if (!condition.empty() && action.empty()) {
      throw Error(Errc::action_grammar_error,
                  "line " + std::to_string(line) + ": condition without action");
    }
    if (condition.empty() && !action.empty()) {
      throw Error(Errc::format_error, "line " + std::to_string(line) + ": action without condition");
    }
    if (!condition.empty()) {
      row.condition = Condition::parse(condition);
      row.target = parse_action(action, line);
    }
    intention_for(table, row.intention, row.response).rows.push_back(std::move(row));
  }
  if (table.intentions.empty()) throw Error(Errc::format_error, "document has no rows");

  assign_derived_events(table);
  infer_root(table);
  return table;
}

const Json& require(const Json& object, const char* key, std::string_view where) {
  auto it = object.find(key);
  if (it == object.end()) {
    throw Error(Errc::format_error, std::string(where) + ": missing \"" + key + "\"");
  }
  return *it;
}

IntentionTable parse_json(std::string_view text) {
  Json doc = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw Error(Errc::format_error, "malformed JSON document");
  if (!doc.is_object()) throw Error(Errc::format_error, "table document must be a JSON object");

  IntentionTable table;
  try {
    if (doc.contains("version")) {
      table.version = doc.at("version").get<std::int64_t>();
      if (table.version < 1) throw Error(Errc::format_error, "version must be >= 1");
    }
    const Json& intentions = require(doc, "intentions", "table");
    if (!intentions.is_array()) throw Error(Errc::format_error, "\"intentions\" must be an array");

    for (const Json& item : intentions) {
      if (!item.is_object()) throw Error(Errc::format_error, "intention must be an object");
      Intention intention;
      intention.id = IntentionId::parse(require(item, "id", "intention").get<std::string>());
      if (table.find(intention.id)) {
        throw Error(Errc::format_error, "duplicate intention id " + intention.id.str());
      }
      intention.response = trim(require(item, "response", intention.id.str()).get<std::string>());

      for (const Json& t : item.value("transitions", Json::array())) {
        TransitionRow row{intention.id, intention.response, std::nullopt, std::nullopt};
        const bool has_condition = t.contains("condition") && !t.at("condition").is_null();
        const bool has_target = t.contains("to") && !t.at("to").is_null();
        const bool has_event = t.contains("terminal_event") && !t.at("terminal_event").is_null();
        if (has_condition != has_target) {
          throw Error(Errc::format_error,
                      intention.id.str() + ": transition needs both \"condition\" and \"to\"");
        }
        if (has_condition && has_event) {
          throw Error(Errc::format_error,
                      intention.id.str() + ": terminal_event on a conditional transition");
        }
        if (has_condition) {
          row.condition = Condition::parse(t.at("condition").get<std::string>());
          row.target = IntentionId::parse(t.at("to").get<std::string>());
        } else if (has_event) {
          intention.terminal_event = TerminalEvent{t.at("terminal_event").get<std::string>()};
          if (intention.terminal_event->name.empty()) {
            throw Error(Errc::format_error, intention.id.str() + ": empty terminal_event");
          }
        }
        intention.rows.push_back(std::move(row));
      }

      if (item.contains("training_phrases")) {
        for (const auto& [key, phrases] : item.at("training_phrases").items()) {
          auto& bucket = intention.training_phrases[Condition::parse(key).label()];
          for (const Json& p : phrases) bucket.push_back(p.get<std::string>());
        }
      }
      table.intentions.push_back(std::move(intention));
    }

    assign_derived_events(table);
    if (doc.contains("root") && !doc.at("root").is_null()) {
      table.root = IntentionId::parse(doc.at("root").get<std::string>());
    } else {
      infer_root(table);
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::format_error, std::string("JSON table: ") + e.what());
  }
  return table;
}

std::string row_location(const Intention& intention, std::size_t index) {
  return intention.id.str() + "#" + std::to_string(index + 1);
}

void check_intention(const Intention& intention, const IntentionTable& table,
                     std::vector<Finding>& out) {
  const std::string& loc = intention.id.str();
  auto error = [&](std::string code, std::string where, std::string message) {
    out.push_back({Severity::error, std::move(code), std::move(where), std::move(message)});
  };
  auto warning = [&](std::string code, std::string where, std::string message) {
    out.push_back({Severity::warning, std::move(code), std::move(where), std::move(message)});
  };

  if (intention.response.empty()) error("EmptyResponse", loc, "intention has no response text");

  std::vector<std::string> seen_labels;
  std::size_t terminal_rows = 0;
  for (std::size_t i = 0; i < intention.rows.size(); ++i) {
    const auto& row = intention.rows[i];
    if (row.intention != intention.id) {
      error("MalformedRow", row_location(intention, i),
            "row belongs to " + row.intention.str());
    }
    if (row.response != intention.response) {
      error("ConflictingResponse", row_location(intention, i),
            "response \"" + row.response + "\" differs from \"" + intention.response + "\"");
    }
    if (row.condition.has_value() != row.target.has_value()) {
      error("MalformedRow", row_location(intention, i),
            "condition and action must both be set or both be empty");
      continue;
    }
    if (row.is_terminal()) {
      ++terminal_rows;
      continue;
    }
    const std::string label = row.condition->label();
    if (std::find(seen_labels.begin(), seen_labels.end(), label) != seen_labels.end()) {
      error("DuplicateCondition", row_location(intention, i),
            "condition \"" + label + "\" appears more than once");
    }
    seen_labels.push_back(label);
    if (!table.find(*row.target)) {
      error("DanglingReference", row_location(intention, i),
            "target " + row.target->str() + " does not exist");
    }
  }

  if (terminal_rows > 1) {
    error("DuplicateCondition", loc, "more than one terminal row");
  }
  if (terminal_rows > 0 && !seen_labels.empty()) {
    error("TerminalWithTransitions", loc, "terminal intention has outgoing rows");
  }
  if (terminal_rows > 0) {
    if (!intention.terminal_event) {
      warning("DefaultTerminalEvent", loc,
              "no terminal event declared or implied by the response; NotifyResponsible assumed");
    }
  } else {
    if (!intention.has_condition(Condition::affirmative())) {
      error("MissingAffirmative", loc, "non-terminal intention has no Yes row");
    }
    if (!intention.has_condition(Condition::negative())) {
      warning("MissingNegative", loc,
              "no No row; a negative answer closes the conversation as not an incident");
    }
  }
  for (const auto& [label, phrases] : intention.training_phrases) {
    if (std::find(seen_labels.begin(), seen_labels.end(), label) == seen_labels.end()) {
      error("UnknownTrainingCondition", loc,
            "training phrases for condition \"" + label + "\" which has no row");
    }
    for (const auto& phrase : phrases) {
      if (trim(phrase).empty()) error("EmptyTrainingPhrase", loc, "blank training phrase");
    }
  }
}

void check_cycles(const IntentionTable& table, std::vector<Finding>& out) {
  enum class Mark { white, grey, black };
  std::unordered_map<std::string, Mark> marks;
  std::vector<IntentionId> stack;
  std::set<std::vector<IntentionId>> reported;

  std::function<void(const Intention&)> visit = [&](const Intention& node) {
    marks[node.id.str()] = Mark::grey;
    stack.push_back(node.id);
    for (const auto& row : node.rows) {
      if (!row.target) continue;
      const Intention* next = table.find(*row.target);
      if (!next) continue;
      Mark m = marks[next->id.str()];
      if (m == Mark::grey) {
        auto start = std::find(stack.begin(), stack.end(), next->id);
        std::vector<IntentionId> cycle(start, stack.end());
        auto key = cycle;
        std::rotate(key.begin(), std::min_element(key.begin(), key.end()), key.end());
        if (!reported.insert(key).second) continue;
        std::string path;
        for (const auto& id : cycle) path += id.str() + " -> ";
        path += next->id.str();
        out.push_back({Severity::error, "CycleDetected", next->id.str(), "cycle " + path});
      } else if (m == Mark::white) {
        visit(*next);
      }
    }
    stack.pop_back();
    marks[node.id.str()] = Mark::black;
  };

  for (const auto& intention : table.intentions) marks.emplace(intention.id.str(), Mark::white);
  for (const auto& intention : table.intentions)
    if (marks[intention.id.str()] == Mark::white) visit(intention);
}

std::string describe_rows(const Intention& intention) {
  std::string out;
  for (const auto& row : intention.rows) {
    out += row.is_terminal() ? std::string("terminal")
                             : row.condition->label() + "->" + row.target->str();
    out += ";";
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

IntentionId IntentionId::parse(std::string_view text) {
  std::string canonical;
  bool pending_dash = false;
  for (unsigned char c : trim(text)) {
    if (std::isspace(c) || c == '_') {
      pending_dash = !canonical.empty();
      continue;
    }
    if (pending_dash) {
      if (canonical.back() != '-' && c != '-') canonical.push_back('-');
      pending_dash = false;
    }
    c = static_cast<unsigned char>(std::tolower(c));
    if (!(std::isalnum(c) || c == '-' || c == '.')) {
      throw Error(Errc::format_error, "invalid character in intention id \"" + std::string(text) + "\"");
    }
    canonical.push_back(static_cast<char>(c));
  }
  if (canonical.empty()) throw Error(Errc::format_error, "empty intention id");
  return IntentionId(std::move(canonical));
}

bool IntentionId::is_numbered() const {
  return value_.starts_with(kNumberedPrefix) &&
         all_digits(std::string_view(value_).substr(kNumberedPrefix.size()));
}

std::string IntentionId::short_form() const {
  return is_numbered() ? value_.substr(kNumberedPrefix.size()) : value_;
}

std::string IntentionId::display_form() const {
  return is_numbered() ? "Intention " + short_form() : value_;
}

std::optional<TerminalEvent> TerminalEvent::from_response(std::string_view response) {
  const std::string key = lower(trim(response));
  if (key == "notify the responsible analyst or group") return notify_responsible();
  if (key == "align user over fix") return align_user();
  return std::nullopt;
}

Condition Condition::parse(std::string_view text) {
  std::string value = trim(text);
  if (value.empty()) throw Error(Errc::format_error, "empty condition");
  const std::string key = lower(value);
  if (key == "yes") return affirmative();
  if (key == "no") return negative();
  return custom(std::move(value));
}

std::string Condition::label() const {
  switch (kind) {
    case Kind::affirmative: return "Yes";
    case Kind::negative: return "No";
    case Kind::phrase: return phrase;
  }
  return phrase;
}

bool Intention::is_terminal() const {
  return std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.is_terminal(); });
}

bool Intention::has_condition(const Condition& condition) const {
  return find_row(condition) != nullptr;
}

const TransitionRow* Intention::find_row(const Condition& condition) const {
  for (const auto& row : rows)
    if (row.condition && *row.condition == condition) return &row;
  return nullptr;
}

std::vector<const TransitionRow*> Intention::transitions() const {
  std::vector<const TransitionRow*> out;
  for (const auto& row : rows)
    if (!row.is_terminal()) out.push_back(&row);
  return out;
}

TerminalEvent Intention::effective_event() const {
  return terminal_event.value_or(TerminalEvent::notify_responsible());
}

const Intention* IntentionTable::find(const IntentionId& id) const {
  for (const auto& intention : intentions)
    if (intention.id == id) return &intention;
  return nullptr;
}

Intention* IntentionTable::find(const IntentionId& id) {
  for (auto& intention : intentions)
    if (intention.id == id) return &intention;
  return nullptr;
}

std::size_t IntentionTable::row_count() const {
  std::size_t n = 0;
  for (const auto& intention : intentions) n += intention.rows.size();
  return n;
}

std::vector<IntentionId> IntentionTable::terminals() const {
  std::vector<IntentionId> out;
  for (const auto& intention : intentions)
    if (intention.is_terminal()) out.push_back(intention.id);
  return out;
}

TableFormat sniff_format(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  for (unsigned char c : text) {
    if (std::isspace(c)) continue;
    return c == '{' ? TableFormat::json : TableFormat::csv;
  }
  return TableFormat::csv;
}

IntentionTable parse_table(std::string_view text, TableFormat format) {
  return format == TableFormat::json ? parse_json(text) : parse_csv(text);
}

IntentionTable parse_table(std::string_view text) { return parse_table(text, sniff_format(text)); }

std::string_view to_string(Severity severity) {
  return severity == Severity::error ? "ERROR" : "WARNING";
}

std::size_t ValidationReport::count(Severity severity) const {
  return static_cast<std::size_t>(std::count_if(
      findings.begin(), findings.end(), [&](const Finding& f) { return f.severity == severity; }));
}

bool ValidationReport::has(std::string_view code) const {
  return std::any_of(findings.begin(), findings.end(),
                     [&](const Finding& f) { return f.code == code; });
}

ValidationReport validate_table(const IntentionTable& table) {
  ValidationReport report;
  auto& out = report.findings;

  if (table.intentions.empty()) {
    out.push_back({Severity::error, "MissingRoot", "table", "table has no intentions"});
    report.ok = false;
    return report;
  }

  std::set<IntentionId> ids;
  for (const auto& intention : table.intentions) {
    if (!ids.insert(intention.id).second) {
      out.push_back({Severity::error, "DuplicateIntention", intention.id.str(),
                     "intention id declared twice"});
    }
  }

  const auto roots = zero_in_degree(table);
  if (roots.empty()) {
    out.push_back({Severity::error, "MissingRoot", "table",
                   "every intention is the target of some action"});
  } else if (roots.size() > 1) {
    std::string names;
    for (const auto& id : roots) names += (names.empty() ? "" : ", ") + id.str();
    out.push_back({Severity::error, "AmbiguousRoot", "table",
                   "several intentions are referenced by no action: " + names});
  } else if (table.root.empty() || !table.find(table.root)) {
    out.push_back({Severity::error, "MissingRoot", "table",
                   "declared root \"" + table.root.str() + "\" does not exist"});
  } else if (roots.front() != table.root) {
    out.push_back({Severity::error, "RootMismatch", "table",
                   "declared root " + table.root.str() + " but the entry point is " +
                       roots.front().str()});
  }

  for (const auto& intention : table.intentions) check_intention(intention, table, out);
  check_cycles(table, out);

  report.ok = report.count(Severity::error) == 0;
  return report;
}

Json table_to_json(const IntentionTable& table) {
  Json intentions = Json::array();
  for (const auto& intention : table.intentions) {
    Json transitions = Json::array();
    for (const auto& row : intention.rows) {
      Json t = Json::object();
      if (row.is_terminal()) {
        if (intention.terminal_event) t["terminal_event"] = intention.terminal_event->name;
      } else {
        t["condition"] = row.condition->label();
        t["to"] = row.target->str();
      }
      transitions.push_back(std::move(t));
    }
    Json phrases = Json::object();
    for (const auto& [label, list] : intention.training_phrases) phrases[label] = list;
    intentions.push_back({{"id", intention.id.str()},
                          {"response", intention.response},
                          {"transitions", std::move(transitions)},
                          {"training_phrases", std::move(phrases)}});
  }
  return {{"version", table.version}, {"root", table.root.str()}, {"intentions", intentions}};
}

Json report_to_json(const ValidationReport& report) {
  Json findings = Json::array();
  for (const auto& f : report.findings) {
    findings.push_back({{"severity", to_string(f.severity)},
                        {"code", f.code},
                        {"location", f.location},
                        {"message", f.message}});
  }
  return {{"ok", report.ok}, {"findings", std::move(findings)}};
}

std::string export_table(const IntentionTable& table, TableFormat format) {
  const auto report = validate_table(table);
  if (!report.ok) {
    throw Error(Errc::invalid_table, "cannot export a table with validation errors");
  }
  if (format == TableFormat::json) return table_to_json(table).dump(2) + "\n";

  std::string out = "intention,response,condition,action\n";
  for (const auto& intention : table.intentions) {
    for (const auto& [label, phrases] : intention.training_phrases) {
      if (!phrases.empty()) {
        throw Error(Errc::unrepresentable,
                    intention.id.str() + ": training phrases need the JSON format");
      }
    }
    if (intention.terminal_event != TerminalEvent::from_response(intention.response) &&
        intention.is_terminal()) {
      throw Error(Errc::unrepresentable,
                  intention.id.str() + ": terminal event needs the JSON format");
    }
    for (const auto& row : intention.rows) {
      csv::Record record{intention.id.display_form(), intention.response, "", ""};
      if (!row.is_terminal()) {
        if (!row.target->is_numbered()) {
          throw Error(Errc::unrepresentable,
                      "target " + row.target->str() + " cannot be written as \"Proceed for intention NN\"");
        }
        record[2] = row.condition->label();
        record[3] = "Proceed for intention " + row.target->short_form();
      }
      out += csv::format_record(record);
      out += '\n';
    }
  }
  return out;
}

TableDiff diff_tables(const IntentionTable& before, const IntentionTable& after) {
  if (!validate_table(before).ok || !validate_table(after).ok) {
    throw Error(Errc::invalid_table, "diff requires two valid tables");
  }
  TableDiff diff;
  diff.version = after.version;
  diff.root = after.root;
  for (const auto& intention : after.intentions) diff.order.push_back(intention.id);

  std::vector<IntentionId> before_order;
  for (const auto& intention : before.intentions) before_order.push_back(intention.id);
  diff.metadata_changed =
      before.version != after.version || before.root != after.root || before_order != diff.order;

  for (const auto& old : before.intentions) {
    const Intention* now = after.find(old.id);
    if (!now) {
      diff.removed.push_back(old.id);
      continue;
    }
    if (*now == old) continue;
    IntentionChange change{old.id, {}, *now};
    if (now->response != old.response) change.notes.push_back("response changed");
    if (now->rows != old.rows) {
      change.notes.push_back("rows changed: " + describe_rows(old) + " => " + describe_rows(*now));
    }
    if (now->training_phrases != old.training_phrases) {
      change.notes.push_back("training phrases changed");
    }
    if (now->terminal_event != old.terminal_event) change.notes.push_back("terminal event changed");
    diff.modified.push_back(std::move(change));
  }
  for (const auto& intention : after.intentions)
    if (!before.find(intention.id)) diff.added.push_back(intention);
  return diff;
}

IntentionTable apply_diff(const IntentionTable& base, const TableDiff& diff) {
  std::map<IntentionId, Intention> pool;
  for (const auto& intention : base.intentions) pool[intention.id] = intention;
  for (const auto& id : diff.removed) pool.erase(id);
  for (const auto& change : diff.modified) pool[change.id] = change.updated;
  for (const auto& intention : diff.added) pool[intention.id] = intention;

  IntentionTable out;
  out.version = diff.version;
  out.root = diff.root;
  for (const auto& id : diff.order) {
    auto it = pool.find(id);
    if (it == pool.end()) throw Error(Errc::invalid_table, "diff references unknown " + id.str());
    out.intentions.push_back(it->second);
  }
  return out;
}

}  // namespace triagebot
