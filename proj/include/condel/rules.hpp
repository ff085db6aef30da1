#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "condel/clock.hpp"
#include "condel/corpus.hpp"
#include "condel/index.hpp"

namespace condel {

// delegation: a matching comment is reported only if the model predicts it
// toxic. report_all: every matching comment is reported.
enum class RuleMode { delegation, report_all };

std::string_view to_string(RuleMode mode);
std::optional<RuleMode> parse_rule_mode(std::string_view text);

struct Rule {
  std::string keyword;  // single lowercase token
  Timestamp created_at{};
};

// Trims whitespace and lowercases; the result must contain exactly one token,
// which is returned (surrounding punctuation is dropped: "idiot!" -> "idiot").
// Throws Error(invalid) with "empty keyword", "multi-token keyword" or
// "keyword has no token".
std::string normalize_keyword(std::string_view raw);

// Ordered, duplicate-free keyword rules sharing one mode. A value type:
// modifying operations return a new set.
class RuleSet {
 public:
  explicit RuleSet(RuleMode mode = RuleMode::delegation) : mode_(mode) {}

  // Normalizes every keyword; throws on duplicates.
  static RuleSet from_keywords(RuleMode mode, std::span<const std::string> raw_keywords);

  RuleMode mode() const { return mode_; }
  const std::vector<Rule>& rules() const { return rules_; }
  std::vector<std::string> keywords() const;
  std::size_t size() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }
  bool has(std::string_view keyword) const;

  // Throws Error(conflict, "duplicate rule").
  [[nodiscard]] RuleSet with_rule(std::string_view raw, Timestamp at = {}) const;
  // Normalizes `raw` first; throws Error(not_found, "no such rule").
  [[nodiscard]] RuleSet without_rule(std::string_view raw) const;
  [[nodiscard]] RuleSet with_mode(RuleMode mode) const;

 private:
  RuleMode mode_;
  std::vector<Rule> rules_;
};

inline RuleSet add_rule(const RuleSet& rules, std::string_view raw, Timestamp at = {}) {
  return rules.with_rule(raw, at);
}
inline RuleSet remove_rule(const RuleSet& rules, std::string_view keyword) {
  return rules.without_rule(keyword);
}

struct RuleStats {
  std::size_t total_matched = 0;
  std::size_t predicted_toxic_matched = 0;
  friend bool operator==(const RuleStats&, const RuleStats&) = default;
};

RuleStats rule_stats(const InvertedIndex& index, std::string_view keyword);

// Sorted, duplicate-free corpus positions.
using ReportedSet = std::vector<DocPos>;

// Comments matched by any keyword, gated on the model's toxic prediction in
// delegation mode. In strict mode a matched comment without a prediction is
// an error under delegation; lenient mode leaves it unreported.
ReportedSet reported_set(const InvertedIndex& index, std::span<const std::string> keywords,
                         RuleMode mode, Strictness strictness = Strictness::strict);
ReportedSet reported_set(const InvertedIndex& index, const RuleSet& rules,
                         Strictness strictness = Strictness::strict);

std::vector<std::string> reported_ids(const InvertedIndex& index, const ReportedSet& set);

// Ruleset file: {"mode": "delegation"|"report_all", "rules": [keyword, ...]}
RuleSet parse_ruleset(std::string_view json_text);
RuleSet load_ruleset(const std::filesystem::path& path);
std::string ruleset_to_json(const RuleSet& rules);

}  // namespace condel
