#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "triagebot/intention_model.hpp"

namespace triagebot {

/// Lowercase tokens with punctuation stripped. Never holds an empty token.
struct TokenList {
  std::vector<std::string> tokens;

  bool empty() const { return tokens.empty(); }
  std::string joined() const;
  bool operator==(const TokenList&) const = default;
};

// Lowercases ASCII letters, deletes ASCII punctuation, splits on whitespace
// runs. Bytes >= 0x80 pass through untouched, so UTF-8 words survive.
TokenList normalize(std::string_view utterance);

// Jaccard overlap of the two token sets. Zero when either side is empty.
double score(const TokenList& a, const TokenList& b);

struct MatcherConfig {
  double threshold = 0.5;
  std::vector<std::string> affirmative;
  std::vector<std::string> negative;

  // Throws Error(invalid_config): threshold outside [0,1], an empty
  // lexicon, or a phrase present in both lexicons after normalization.
  void check() const;

  static MatcherConfig from_json(const Json& doc);
  static MatcherConfig load(const std::filesystem::path& path);
};

template <class Label>
struct ScoredCandidate {
  Label label;
  double score = 0.0;
  std::string best_phrase;  // phrase that produced the score
};

/// Outcome of classifying one utterance against a set of labels.
/// `matched` is empty on fallback; `candidates` are ordered by score
/// descending, then by declaration order.
template <class Label>
struct MatchResult {
  std::optional<Label> matched;
  double score = 0.0;
  std::vector<ScoredCandidate<Label>> candidates;

  bool is_fallback() const { return !matched.has_value(); }
};

using ConditionMatch = MatchResult<Condition>;

// Scores the utterance against every phrase of every labelled group and
// picks the best group. A group wins when its best score reaches the
// threshold and is non-zero; ties go to the earlier group.
template <class Label>
MatchResult<Label> classify_against(
    const TokenList& utterance,
    const std::vector<std::pair<Label, std::vector<std::string>>>& groups, double threshold) {
  MatchResult<Label> result;
  for (const auto& [label, phrases] : groups) {
    ScoredCandidate<Label> candidate{label, 0.0, {}};
    for (const auto& phrase : phrases) {
      const double s = score(utterance, normalize(phrase));
      if (s > candidate.score) {
        candidate.score = s;
        candidate.best_phrase = phrase;
      }
    }
    result.candidates.push_back(std::move(candidate));
  }
  std::stable_sort(result.candidates.begin(), result.candidates.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  if (!result.candidates.empty()) {
    const auto& best = result.candidates.front();
    result.score = best.score;
    if (best.score > 0.0 && best.score >= threshold) result.matched = best.label;
  }
  return result;
}

// Phrase groups the matcher uses for one node: each declared condition with
// its lexicon or phrase text plus training phrases, in row order. A node
// without a No row also gets an implicit Negative group (lexicon only) so a
// plain "no" can close the conversation.
std::vector<std::pair<Condition, std::vector<std::string>>> condition_phrase_groups(
    const Intention& node, const MatcherConfig& cfg);

// Throws Error(terminal_node) for a terminal intention.
ConditionMatch classify_condition(std::string_view utterance, const Intention& node,
                                  const MatcherConfig& cfg);

}  // namespace triagebot
