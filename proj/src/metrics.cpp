#include "condel/metrics.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "condel/error.hpp"

namespace condel {

std::optional<double> LabelCounts::precision() const {
  if (total() == 0) return std::nullopt;
  return static_cast<double>(toxic) / static_cast<double>(total());
}

LabelCounts count_labels(const InvertedIndex& index, const ReportedSet& reported,
                         Strictness strictness) {
  LabelCounts counts;
  for (DocPos pos : reported) {
    const auto& c = index.comment(pos);
    if (!c.gold) {
      if (strictness == Strictness::strict) {
        throw Error(ErrorKind::precondition, "comment " + c.id + " has no gold label");
      }
      continue;
    }
    if (*c.gold == Label::toxic) {
      ++counts.toxic;
    } else {
      ++counts.nontoxic;
    }
  }
  return counts;
}

namespace {

LabelCounts keyword_counts(const InvertedIndex& index, std::string_view keyword, RuleMode mode,
                           Strictness strictness) {
  const std::string key(keyword);
  return count_labels(index, reported_set(index, std::span(&key, 1), mode, strictness), strictness);
}

}  // namespace

std::optional<double> rule_precision(const InvertedIndex& index, std::string_view keyword,
                                     RuleMode mode, Strictness strictness) {
  return keyword_counts(index, keyword, mode, strictness).precision();
}

AveragePrecision average_precision(const InvertedIndex& index, const RuleSet& rules,
                                   Strictness strictness) {
  AveragePrecision result;
  double sum = 0.0;
  for (const auto& rule : rules.rules()) {
    if (auto p = rule_precision(index, rule.keyword, rules.mode(), strictness)) {
      sum += *p;
      ++result.defined_rule_count;
    }
  }
  if (result.defined_rule_count > 0) result.value = sum / static_cast<double>(result.defined_rule_count);
  return result;
}

std::optional<double> union_precision(const InvertedIndex& index, const RuleSet& rules,
                                      Strictness strictness) {
  return count_labels(index, reported_set(index, rules, strictness), strictness).precision();
}

std::int64_t reward(const InvertedIndex& index, const RuleSet& rules, Strictness strictness) {
  return count_labels(index, reported_set(index, rules, strictness), strictness).reward();
}

UsdCents bonus(std::size_t true_positives, std::size_t false_positives) {
  // One net comment is worth a tenth of a cent.
  auto net = static_cast<std::int64_t>(true_positives) - static_cast<std::int64_t>(false_positives);
  net = std::clamp<std::int64_t>(net, 0, 2000);
  return {(net + 5) / 10};
}

std::optional<double> model_alone_precision(const Corpus& corpus, Strictness strictness) {
  LabelCounts counts;
  for (const auto& c : corpus.comments) {
    if (!c.predicted_toxic()) continue;
    if (!c.gold) {
      if (strictness == Strictness::strict) {
        throw Error(ErrorKind::precondition, "comment " + c.id + " has no gold label");
      }
      continue;
    }
    if (*c.gold == Label::toxic) {
      ++counts.toxic;
    } else {
      ++counts.nontoxic;
    }
  }
  return counts.precision();
}

EvaluationReport evaluate(const InvertedIndex& index, const RuleSet& rules, Strictness strictness) {
  EvaluationReport report;
  report.corpus = index.corpus().name;
  report.mode = rules.mode();

  double precision_sum = 0.0;
  for (const auto& rule : rules.rules()) {
    const std::string& key = rule.keyword;
    auto reported = reported_set(index, std::span(&key, 1), rules.mode(), strictness);
    auto counts = count_labels(index, reported, strictness);
    RuleEvaluation row;
    row.keyword = key;
    row.precision = counts.precision();
    row.matched = index.postings(key).size();
    row.reported = reported.size();
    row.reward = counts.reward();
    if (row.precision) {
      precision_sum += *row.precision;
      ++report.defined_rule_count;
    }
    report.per_rule.push_back(std::move(row));
  }
  if (report.defined_rule_count > 0) {
    report.average_precision = precision_sum / static_cast<double>(report.defined_rule_count);
  }

  auto reported = reported_set(index, rules, strictness);
  auto counts = count_labels(index, reported, strictness);
  report.union_precision = counts.precision();
  report.coverage = reported.size();
  report.reward = counts.reward();
  report.true_positives = counts.toxic;
  report.false_positives = counts.nontoxic;
  report.bonus = bonus(counts.toxic, counts.nontoxic);
  report.model_alone_precision = model_alone_precision(index.corpus(), strictness);
  return report;
}

namespace {

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

nlohmann::ordered_json to_json(const EvaluationReport& report) {
  nlohmann::ordered_json doc;
  doc["corpus"] = report.corpus;
  doc["mode"] = to_string(report.mode);
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : report.per_rule) {
    nlohmann::ordered_json row;
    row["keyword"] = r.keyword;
    row["precision"] = optional_json(r.precision);
    row["matched"] = r.matched;
    row["reported"] = r.reported;
    row["reward"] = r.reward;
    rows.push_back(std::move(row));
  }
  doc["per_rule"] = std::move(rows);
  doc["average_precision"] = optional_json(report.average_precision);
  doc["defined_rule_count"] = report.defined_rule_count;
  doc["union_precision"] = optional_json(report.union_precision);
  doc["coverage"] = report.coverage;
  doc["reward"] = report.reward;
  doc["true_positives"] = report.true_positives;
  doc["false_positives"] = report.false_positives;
  doc["bonus_usd"] = report.bonus.dollars();
  doc["model_alone_precision"] = optional_json(report.model_alone_precision);
  return doc;
}

// ---------------------------------------------------------------------------

std::optional<WordColumn> parse_word_column(std::string_view name) {
  static const std::array<std::pair<std::string_view, WordColumn>, 6> kColumns{{
      {"word", WordColumn::word},
      {"support", WordColumn::support},
      {"delegation_precision", WordColumn::delegation_precision},
      {"report_all_precision", WordColumn::report_all_precision},
      {"delegation_reward", WordColumn::delegation_reward},
      {"report_all_reward", WordColumn::report_all_reward},
  }};
  for (const auto& [key, column] : kColumns) {
    if (key == name) return column;
  }
  return std::nullopt;
}

std::vector<WordMetricsRow> word_table(const InvertedIndex& index, std::size_t min_support,
                                       Strictness strictness) {
  std::vector<WordMetricsRow> rows;
  for (const auto& [word, postings] : index.all_postings()) {
    if (postings.size() < min_support) continue;
    auto delegation = keyword_counts(index, word, RuleMode::delegation, strictness);
    auto report_all = keyword_counts(index, word, RuleMode::report_all, strictness);
    WordMetricsRow row;
    row.word = word;
    row.support = postings.size();
    row.delegation_precision = delegation.precision();
    row.report_all_precision = report_all.precision();
    row.delegation_reward = delegation.reward();
    row.report_all_reward = report_all.reward();
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

template <typename T>
int compare_value(const T& a, const T& b) {
  return a < b ? -1 : (b < a ? 1 : 0);
}

// Orders two optional cells: absent values go last in either direction.
int compare_cells(const std::optional<double>& a, const std::optional<double>& b, bool descending) {
  if (!a || !b) return a ? -1 : (b ? 1 : 0);
  int cmp = compare_value(*a, *b);
  return descending ? -cmp : cmp;
}

}  // namespace

void sort_word_table(std::vector<WordMetricsRow>& rows, WordColumn column, bool descending) {
  auto less = [column, descending](const WordMetricsRow& a, const WordMetricsRow& b) {
    auto flip = [descending](int cmp) { return descending ? -cmp : cmp; };
    int cmp = 0;
    switch (column) {
      case WordColumn::word:
        cmp = flip(compare_value(a.word, b.word));
        break;
      case WordColumn::support:
        cmp = flip(compare_value(a.support, b.support));
        break;
      case WordColumn::delegation_precision:
        cmp = compare_cells(a.delegation_precision, b.delegation_precision, descending);
        break;
      case WordColumn::report_all_precision:
        cmp = compare_cells(a.report_all_precision, b.report_all_precision, descending);
        break;
      case WordColumn::delegation_reward:
        cmp = flip(compare_value(a.delegation_reward, b.delegation_reward));
        break;
      case WordColumn::report_all_reward:
        cmp = flip(compare_value(a.report_all_reward, b.report_all_reward));
        break;
    }
    if (cmp != 0) return cmp < 0;
    return a.word < b.word;
  };
  std::stable_sort(rows.begin(), rows.end(), less);
}

namespace {

std::string format_number(double value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

std::string csv_optional(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n\r") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string word_table_csv(const std::vector<WordMetricsRow>& rows) {
  std::ostringstream out;
  out << "word,support,delegation_precision,report_all_precision,delegation_reward,report_all_reward\n";
  for (const auto& r : rows) {
    out << csv_field(r.word) << ',' << r.support << ',' << csv_optional(r.delegation_precision) << ','
        << csv_optional(r.report_all_precision) << ',' << r.delegation_reward << ','
        << r.report_all_reward << '\n';
  }
  return out.str();
}

std::vector<TokenFrequency> global_explanations(const Corpus& corpus, std::size_t k) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : corpus.comments) {
    if (!c.pred) continue;
    for (const auto& span : c.pred->rationale) {
      for (auto& token : tokenize(substr_scalars(c.text, span))) ++counts[std::move(token.text)];
    }
  }
  std::vector<TokenFrequency> entries;
  entries.reserve(counts.size());
  for (auto& [token, n] : counts) entries.push_back({token, n});
  // counts is ordered by token, so a stable sort on frequency keeps the tie-break
  std::stable_sort(entries.begin(), entries.end(),
                   [](const TokenFrequency& a, const TokenFrequency& b) { return a.frequency > b.frequency; });
  if (entries.size() > k) entries.resize(k);
  return entries;
}

// ---------------------------------------------------------------------------

namespace {

std::optional<double> delta(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return *b - *a;
}

std::set<std::string> keyword_set(const EvaluationReport& report) {
  std::set<std::string> out;
  for (const auto& r : report.per_rule) out.insert(r.keyword);
  return out;
}

}  // namespace

DistributionDelta compare_distributions(const EvaluationReport& a, const EvaluationReport& b) {
  if (a.mode != b.mode) throw Error(ErrorKind::invalid, "rule mode mismatch", "mode");
  if (keyword_set(a) != keyword_set(b)) throw Error(ErrorKind::invalid, "ruleset mismatch", "rules");
  DistributionDelta d;
  d.corpus_a = a.corpus;
  d.corpus_b = b.corpus;
  d.mode = a.mode;
  d.average_precision = delta(a.average_precision, b.average_precision);
  d.union_precision = delta(a.union_precision, b.union_precision);
  d.coverage = static_cast<std::int64_t>(b.coverage) - static_cast<std::int64_t>(a.coverage);
  d.reward = b.reward - a.reward;
  d.model_alone_precision = delta(a.model_alone_precision, b.model_alone_precision);
  return d;
}

nlohmann::ordered_json to_json(const DistributionDelta& d) {
  nlohmann::ordered_json doc;
  doc["corpus_a"] = d.corpus_a;
  doc["corpus_b"] = d.corpus_b;
  doc["mode"] = to_string(d.mode);
  doc["average_precision"] = optional_json(d.average_precision);
  doc["union_precision"] = optional_json(d.union_precision);
  doc["coverage"] = d.coverage;
  doc["reward"] = d.reward;
  doc["model_alone_precision"] = optional_json(d.model_alone_precision);
  return doc;
}

}  // namespace condel
