#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "condel/corpus.hpp"
#include "condel/index.hpp"
#include "condel/rules.hpp"
#include "json.hpp"

namespace condel {

// Gold-label tally over a set of reported comments.
struct LabelCounts {
  std::size_t toxic = 0;     // true positives
  std::size_t nontoxic = 0;  // false positives

  std::size_t total() const { return toxic + nontoxic; }
  std::optional<double> precision() const;
  std::int64_t reward() const {
    return static_cast<std::int64_t>(toxic) - static_cast<std::int64_t>(nontoxic);
  }
};

// Strict mode throws Error(precondition) on a comment without a gold label;
// lenient mode leaves it out of both counts.
LabelCounts count_labels(const InvertedIndex& index, const ReportedSet& reported,
                         Strictness strictness = Strictness::strict);

// Precision of the comments one keyword reports under `mode`; absent when the
// keyword reports nothing.
std::optional<double> rule_precision(const InvertedIndex& index, std::string_view keyword,
                                     RuleMode mode, Strictness strictness = Strictness::strict);

struct AveragePrecision {
  std::optional<double> value;  // mean over rules with defined precision
  std::size_t defined_rule_count = 0;
};

AveragePrecision average_precision(const InvertedIndex& index, const RuleSet& rules,
                                   Strictness strictness = Strictness::strict);
std::optional<double> union_precision(const InvertedIndex& index, const RuleSet& rules,
                                      Strictness strictness = Strictness::strict);
std::int64_t reward(const InvertedIndex& index, const RuleSet& rules,
                    Strictness strictness = Strictness::strict);

// Participant bonus: $0.001 per net correctly reported comment, clamped to
// [$0, $2] and rounded half-up to the cent.
struct UsdCents {
  std::int64_t cents = 0;
  double dollars() const { return static_cast<double>(cents) / 100.0; }
  friend bool operator==(const UsdCents&, const UsdCents&) = default;
};
UsdCents bonus(std::size_t true_positives, std::size_t false_positives);
inline double bonus_usd(std::size_t true_positives, std::size_t false_positives) {
  return bonus(true_positives, false_positives).dollars();
}

// Precision of the model's predicted-toxic set over the whole corpus.
std::optional<double> model_alone_precision(const Corpus& corpus,
                                            Strictness strictness = Strictness::strict);

struct RuleEvaluation {
  std::string keyword;
  std::optional<double> precision;
  std::size_t matched = 0;   // comments containing the keyword
  std::size_t reported = 0;  // of those, reported under the set's mode
  std::int64_t reward = 0;
};

struct EvaluationReport {
  std::string corpus;
  RuleMode mode = RuleMode::delegation;
  std::vector<RuleEvaluation> per_rule;
  std::optional<double> average_precision;
  std::size_t defined_rule_count = 0;
  std::optional<double> union_precision;
  std::size_t coverage = 0;
  std::int64_t reward = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  UsdCents bonus;
  std::optional<double> model_alone_precision;
};

EvaluationReport evaluate(const InvertedIndex& index, const RuleSet& rules,
                          Strictness strictness = Strictness::strict);
nlohmann::ordered_json to_json(const EvaluationReport& report);

// ---------------------------------------------------------------------------
// Per-word analysis

inline constexpr std::size_t kDefaultMinSupport = 100;

struct WordMetricsRow {
  std::string word;
  std::size_t support = 0;
  std::optional<double> delegation_precision;
  std::optional<double> report_all_precision;
  std::int64_t delegation_reward = 0;
  std::int64_t report_all_reward = 0;
};

enum class WordColumn {
  word,
  support,
  delegation_precision,
  report_all_precision,
  delegation_reward,
  report_all_reward,
};
std::optional<WordColumn> parse_word_column(std::string_view name);

// One row per token with support >= min_support, ordered by word.
std::vector<WordMetricsRow> word_table(const InvertedIndex& index, std::size_t min_support,
                                       Strictness strictness = Strictness::strict);
// Stable sort on one column; absent values sort last, ties break by word.
void sort_word_table(std::vector<WordMetricsRow>& rows, WordColumn column, bool descending);
std::string word_table_csv(const std::vector<WordMetricsRow>& rows);

struct TokenFrequency {
  std::string token;
  std::size_t frequency = 0;
  friend bool operator==(const TokenFrequency&, const TokenFrequency&) = default;
};

// Most frequent rationale tokens (occurrence counts), frequency descending
// then token ascending, at most k entries.
std::vector<TokenFrequency> global_explanations(const Corpus& corpus, std::size_t k);

// ---------------------------------------------------------------------------
// Cross-distribution comparison

struct DistributionDelta {
  std::string corpus_a;
  std::string corpus_b;
  RuleMode mode = RuleMode::delegation;
  // b - a; absent when either side is absent
  std::optional<double> average_precision;
  std::optional<double> union_precision;
  std::int64_t coverage = 0;
  std::int64_t reward = 0;
  std::optional<double> model_alone_precision;
};

// Throws Error(invalid) when the reports disagree on mode or keyword set.
DistributionDelta compare_distributions(const EvaluationReport& a, const EvaluationReport& b);
nlohmann::ordered_json to_json(const DistributionDelta& delta);

}  // namespace condel
