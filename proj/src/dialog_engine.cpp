#include "triagebot/dialog_engine.hpp"

#include <algorithm>

#include "triagebot/error.hpp"

namespace triagebot {

IntentionId synthetic_close_id() { return IntentionId::parse("synthetic-close"); }
IntentionId synthetic_escalation_id() { return IntentionId::parse("synthetic-escalation"); }

IntentionId Session::node_id() const {
  if (const auto* outcome = this->outcome()) return outcome->node;
  return std::get<IntentionId>(position);
}

namespace {

Json condition_to_json(const std::optional<Condition>& c) {
  return c ? Json(c->label()) : Json(nullptr);
}

// Escalation lands on the table's NotifyResponsible terminal when it has one.
TerminalOutcome escalation_outcome(const IntentionTable& table, std::string& reply) {
  for (const auto& intention : table.intentions) {
    if (intention.is_terminal() &&
        intention.effective_event() == TerminalEvent::notify_responsible()) {
      reply = intention.response;
      return {TerminalEvent::notify_responsible(), intention.id, false, true};
    }
  }
  reply = std::string(kEscalationReply);
  return {TerminalEvent::notify_responsible(), synthetic_escalation_id(), true, true};
}

}  // namespace

Json turn_to_json(const Turn& turn) {
  Json j = {{"direction", turn.direction == Direction::bot ? "bot" : "user"},
            {"text", turn.text},
            {"at", turn.at}};
  if (turn.match) {
    j["match"] = {{"condition", condition_to_json(turn.match->condition)},
                  {"score", turn.match->score}};
  }
  if (turn.synthetic) j["synthetic"] = true;
  return j;
}

Turn turn_from_json(const Json& j) {
  Turn turn;
  turn.direction = j.at("direction").get<std::string>() == "bot" ? Direction::bot : Direction::user;
  turn.text = j.at("text").get<std::string>();
  turn.at = j.at("at").get<Instant>();
  if (j.contains("match")) {
    const Json& m = j.at("match");
    TurnMatch match;
    if (!m.at("condition").is_null()) {
      match.condition = Condition::parse(m.at("condition").get<std::string>());
    }
    match.score = m.at("score").get<double>();
    turn.match = match;
  }
  turn.synthetic = j.value("synthetic", false);
  return turn;
}

Json position_to_json(const Position& position) {
  if (const auto* outcome = std::get_if<TerminalOutcome>(&position)) {
    return {{"node", outcome->node.str()},
            {"terminal", true},
            {"event", outcome->event.name},
            {"synthetic", outcome->synthetic},
            {"escalated", outcome->escalated}};
  }
  return {{"node", std::get<IntentionId>(position).str()}, {"terminal", false}};
}

Position position_from_json(const Json& j) {
  auto node = IntentionId::parse(j.at("node").get<std::string>());
  if (!j.at("terminal").get<bool>()) return node;
  return TerminalOutcome{TerminalEvent{j.at("event").get<std::string>()}, node,
                         j.at("synthetic").get<bool>(), j.at("escalated").get<bool>()};
}

Json session_to_json(const Session& session) {
  Json transcript = Json::array();
  for (const auto& turn : session.transcript) transcript.push_back(turn_to_json(turn));
  Json j = {{"session_id", session.id},
            {"table_version", session.table_version},
            {"position", position_to_json(session.position)},
            {"intention_id", session.node_id().str()},
            {"terminal", session.is_terminal()},
            {"fallback_streak", session.fallback_streak},
            {"incident_id", session.incident_ref ? Json(*session.incident_ref) : Json(nullptr)},
            {"transcript", std::move(transcript)}};
  j["event"] = session.outcome() ? Json(session.outcome()->event.name) : Json(nullptr);
  return j;
}

Session session_from_json(const Json& j) {
  Session session;
  session.id = j.at("session_id").get<std::string>();
  session.table_version = j.at("table_version").get<std::int64_t>();
  session.position = position_from_json(j.at("position"));
  session.fallback_streak = j.at("fallback_streak").get<int>();
  if (!j.at("incident_id").is_null()) session.incident_ref = j.at("incident_id").get<std::string>();
  for (const auto& t : j.at("transcript")) session.transcript.push_back(turn_from_json(t));
  return session;
}

Json turn_result_to_json(const TurnResult& result) {
  return {{"reply", result.reply},
          {"terminal", result.terminal},
          {"event", result.event ? Json(result.event->name) : Json(nullptr)},
          {"fallback", result.fallback},
          {"intention_id", result.intention_id.str()}};
}

DialogEngine::DialogEngine(MatcherConfig matcher, EngineOptions options, Clock clock)
    : matcher_(std::move(matcher)), options_(options), clock_(std::move(clock)) {
  matcher_.check();
}

Instant DialogEngine::stamp(const Session& session) const {
  Instant now = clock_();
  if (!session.transcript.empty()) now = std::max(now, session.transcript.back().at);
  return now;
}

Session DialogEngine::start_session(std::shared_ptr<const IntentionTable> table,
                                    std::optional<std::string> incident_ref) {
  if (!table || !validate_table(*table).ok) {
    throw Error(Errc::invalid_table, "cannot start a session on an invalid table");
  }
  const Intention* root = table->find(table->root);
  if (root->is_terminal()) {
    throw Error(Errc::invalid_table, "root " + root->id.str() + " is terminal");
  }

  auto fresh = std::make_shared<Slot>();
  Session& session = fresh->session;
  session.id = random_token();
  session.table_version = table->version;
  session.position = root->id;
  session.incident_ref = std::move(incident_ref);
  session.transcript.push_back(Turn{Direction::bot, root->response, std::nullopt, stamp(session)});
  fresh->table = std::move(table);

  if (hooks_.started) hooks_.started(session);
  std::unique_lock lock(sessions_mutex_);
  sessions_[session.id] = fresh;
  return session;
}

std::shared_ptr<DialogEngine::Slot> DialogEngine::slot(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(Errc::unknown_session, "unknown session " + session_id);
  return it->second;
}

TurnResult DialogEngine::advance(const std::string& session_id, std::string_view utterance) {
  auto s = slot(session_id);
  std::lock_guard lock(s->mutex);
  const Session& current = s->session;
  if (current.is_terminal()) {
    throw Error(Errc::session_closed, "session " + session_id + " has already finished");
  }

  const IntentionTable& table = *s->table;
  const Intention& node = *table.find(std::get<IntentionId>(current.position));
  const ConditionMatch match = classify_condition(utterance, node, matcher_);

  Session next = current;
  Turn user{Direction::user, std::string(utterance), TurnMatch{match.matched, match.score},
            stamp(current)};
  Turn bot{Direction::bot, {}, std::nullopt, user.at};
  TurnResult result;

  if (match.matched) {
    next.fallback_streak = 0;
    const TransitionRow* row = node.find_row(*match.matched);
    if (!row) {
      // Negative answer on a node without a No row.
      next.position = TerminalOutcome{TerminalEvent::close_not_incident(), synthetic_close_id(),
                                      true, false};
      bot.text = std::string(kNotIncidentReply);
      bot.synthetic = true;
    } else {
      const Intention& target = *table.find(*row->target);
      bot.text = target.response;
      if (target.is_terminal()) {
        next.position = TerminalOutcome{target.effective_event(), target.id, false, false};
      } else {
        next.position = target.id;
      }
    }
  } else {
    if (hooks_.fallback) hooks_.fallback(current, node.id, utterance);
    result.fallback = true;
    ++next.fallback_streak;
    if (options_.max_fallbacks > 0 && next.fallback_streak >= options_.max_fallbacks) {
      TerminalOutcome outcome = escalation_outcome(table, bot.text);
      bot.synthetic = outcome.synthetic;
      next.position = std::move(outcome);
    } else {
      bot.text = std::string(kClarificationPrefix) + node.response;
    }
  }

  result.reply = bot.text;
  result.intention_id = next.node_id();
  if (const auto* outcome = next.outcome()) {
    result.terminal = true;
    result.event = outcome->event;
  }
  next.transcript.push_back(std::move(user));
  next.transcript.push_back(std::move(bot));

  if (hooks_.advanced) {
    const auto& t = next.transcript;
    hooks_.advanced(next, t[t.size() - 2], t.back(), result);
  }
  s->session = std::move(next);
  return result;
}

std::vector<Turn> DialogEngine::transcript(const std::string& session_id) const {
  return snapshot(session_id).transcript;
}

Session DialogEngine::snapshot(const std::string& session_id) const {
  auto s = slot(session_id);
  std::lock_guard lock(s->mutex);
  return s->session;
}

std::shared_ptr<const IntentionTable> DialogEngine::table_for(const std::string& session_id) const {
  auto s = slot(session_id);
  std::lock_guard lock(s->mutex);
  return s->table;
}

std::vector<std::string> DialogEngine::session_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> ids;
  ids.reserve(sessions_.size());
  for (const auto& [id, _] : sessions_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool DialogEngine::contains(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.contains(session_id);
}

void DialogEngine::restore(Session session, std::shared_ptr<const IntentionTable> table) {
  auto fresh = std::make_shared<Slot>();
  fresh->session = std::move(session);
  fresh->table = std::move(table);
  std::unique_lock lock(sessions_mutex_);
  sessions_[fresh->session.id] = std::move(fresh);
}

PathResult run_path(const IntentionTable& table, std::span<const Answer> answers) {
  if (!validate_table(table).ok) throw Error(Errc::invalid_table, "run_path needs a valid table");

  PathResult result;
  const Intention* node = table.find(table.root);
  auto next_answer = answers.begin();
  while (true) {
    result.visited.push_back(node->id);
    if (node->is_terminal()) {
      result.event = node->effective_event();
      return result;
    }
    if (next_answer == answers.end()) {
      throw Error(Errc::answers_exhausted,
                  "answers ran out at " + node->id.str() + " after " +
                      std::to_string(result.visited.size()) + " nodes");
    }
    const Condition condition =
        *next_answer++ == Answer::affirmative ? Condition::affirmative() : Condition::negative();
    const TransitionRow* row = node->find_row(condition);
    if (!row) {
      // Validation guarantees a Yes row, so only a missing No lands here.
      result.visited.push_back(synthetic_close_id());
      result.event = TerminalEvent::close_not_incident();
      return result;
    }
    node = table.find(*row->target);
  }
}

}  // namespace triagebot
