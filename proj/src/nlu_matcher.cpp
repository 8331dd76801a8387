#include "triagebot/nlu_matcher.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "triagebot/error.hpp"

namespace triagebot {

std::string TokenList::joined() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

TokenList normalize(std::string_view utterance) {
  TokenList out;
  std::string current;
  for (unsigned char c : utterance) {
    if (c < 0x80 && std::isspace(c)) {
      if (!current.empty()) out.tokens.push_back(std::move(current));
      current.clear();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  if (!current.empty()) out.tokens.push_back(std::move(current));
  return out;
}

double score(const TokenList& a, const TokenList& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::set<std::string_view> left(a.tokens.begin(), a.tokens.end());
  std::set<std::string_view> right(b.tokens.begin(), b.tokens.end());
  std::size_t common = 0;
  for (auto t : left) common += right.count(t);
  const std::size_t united = left.size() + right.size() - common;
  return static_cast<double>(common) / static_cast<double>(united);
}

void MatcherConfig::check() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(Errc::invalid_config, "threshold must lie in [0, 1]");
  }
  if (affirmative.empty() || negative.empty()) {
    throw Error(Errc::invalid_config, "affirmative and negative lexicons must be non-empty");
  }
  std::set<std::string> positive;
  for (const auto& p : affirmative) {
    auto key = normalize(p).joined();
    if (key.empty()) throw Error(Errc::invalid_config, "blank lexicon phrase");
    positive.insert(key);
  }
  for (const auto& p : negative) {
    auto key = normalize(p).joined();
    if (key.empty()) throw Error(Errc::invalid_config, "blank lexicon phrase");
    if (positive.contains(key)) {
      throw Error(Errc::invalid_config, "\"" + p + "\" is in both lexicons");
    }
  }
}

MatcherConfig MatcherConfig::from_json(const Json& doc) {
  MatcherConfig cfg;
  try {
    cfg.threshold = doc.value("threshold", 0.5);
    cfg.affirmative = doc.at("affirmative").get<std::vector<std::string>>();
    cfg.negative = doc.at("negative").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw Error(Errc::invalid_config, std::string("matcher config: ") + e.what());
  }
  cfg.check();
  return cfg;
}

MatcherConfig MatcherConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error(Errc::invalid_config, "cannot read matcher config " + path.string());
  }
  Json doc = Json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw Error(Errc::invalid_config, "malformed matcher config");
  return from_json(doc);
}

std::vector<std::pair<Condition, std::vector<std::string>>> condition_phrase_groups(
    const Intention& node, const MatcherConfig& cfg) {
  std::vector<std::pair<Condition, std::vector<std::string>>> groups;
  auto extras = [&](const Condition& c) -> const std::vector<std::string>* {
    auto it = node.training_phrases.find(c.label());
    return it == node.training_phrases.end() ? nullptr : &it->second;
  };
  for (const TransitionRow* row : node.transitions()) {
    const Condition& c = *row->condition;
    std::vector<std::string> phrases;
    switch (c.kind) {
      case Condition::Kind::affirmative: phrases = cfg.affirmative; break;
      case Condition::Kind::negative: phrases = cfg.negative; break;
      case Condition::Kind::phrase: phrases = {c.phrase}; break;
    }
    if (const auto* more = extras(c)) phrases.insert(phrases.end(), more->begin(), more->end());
    groups.emplace_back(c, std::move(phrases));
  }
  if (!node.has_condition(Condition::negative())) {
    groups.emplace_back(Condition::negative(), cfg.negative);
  }
  return groups;
}

ConditionMatch classify_condition(std::string_view utterance, const Intention& node,
                                  const MatcherConfig& cfg) {
  if (node.is_terminal()) {
    throw Error(Errc::terminal_node, node.id.str() + " is terminal and takes no answers");
  }
  return classify_against(normalize(utterance), condition_phrase_groups(node, cfg),
                          cfg.threshold);
}

}  // namespace triagebot
