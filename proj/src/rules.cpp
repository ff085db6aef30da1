#include "condel/rules.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "condel/error.hpp"
#include "json.hpp"

namespace condel {

std::string_view to_string(RuleMode mode) {
  return mode == RuleMode::delegation ? "delegation" : "report_all";
}

std::optional<RuleMode> parse_rule_mode(std::string_view text) {
  if (text == "delegation") return RuleMode::delegation;
  if (text == "report_all") return RuleMode::report_all;
  return std::nullopt;
}

std::string normalize_keyword(std::string_view raw) {
  constexpr std::string_view kSpace = " \t\r\n\f\v";
  auto first = raw.find_first_not_of(kSpace);
  if (first == std::string_view::npos) throw Error(ErrorKind::invalid, "empty keyword", "keyword");
  auto last = raw.find_last_not_of(kSpace);
  auto tokens = tokenize(lowercase(raw.substr(first, last - first + 1)));
  if (tokens.empty()) throw Error(ErrorKind::invalid, "keyword has no token", "keyword");
  if (tokens.size() > 1) throw Error(ErrorKind::invalid, "multi-token keyword", "keyword");
  return std::move(tokens.front().text);
}

RuleSet RuleSet::from_keywords(RuleMode mode, std::span<const std::string> raw_keywords) {
  RuleSet set(mode);
  for (const auto& raw : raw_keywords) set = set.with_rule(raw);
  return set;
}

std::vector<std::string> RuleSet::keywords() const {
  std::vector<std::string> out;
  out.reserve(rules_.size());
  for (const auto& r : rules_) out.push_back(r.keyword);
  return out;
}

bool RuleSet::has(std::string_view keyword) const {
  return std::any_of(rules_.begin(), rules_.end(),
                     [&](const Rule& r) { return r.keyword == keyword; });
}

RuleSet RuleSet::with_rule(std::string_view raw, Timestamp at) const {
  auto keyword = normalize_keyword(raw);
  if (has(keyword)) throw Error(ErrorKind::conflict, "duplicate rule", "keyword");
  RuleSet out = *this;
  out.rules_.push_back({std::move(keyword), at});
  return out;
}

RuleSet RuleSet::without_rule(std::string_view raw) const {
  auto keyword = normalize_keyword(raw);
  RuleSet out = *this;
  auto it = std::find_if(out.rules_.begin(), out.rules_.end(),
                         [&](const Rule& r) { return r.keyword == keyword; });
  if (it == out.rules_.end()) throw Error(ErrorKind::not_found, "no such rule", "keyword");
  out.rules_.erase(it);
  return out;
}

RuleSet RuleSet::with_mode(RuleMode mode) const {
  RuleSet out = *this;
  out.mode_ = mode;
  return out;
}

RuleStats rule_stats(const InvertedIndex& index, std::string_view keyword) {
  RuleStats stats;
  for (DocPos pos : index.postings(keyword)) {
    ++stats.total_matched;
    if (index.comment(pos).predicted_toxic()) ++stats.predicted_toxic_matched;
  }
  return stats;
}

ReportedSet reported_set(const InvertedIndex& index, std::span<const std::string> keywords,
                         RuleMode mode, Strictness strictness) {
  ReportedSet merged;
  for (const auto& keyword : keywords) {
    const auto& postings = index.postings(keyword);
    ReportedSet next;
    next.reserve(merged.size() + postings.size());
    std::set_union(merged.begin(), merged.end(), postings.begin(), postings.end(),
                   std::back_inserter(next));
    merged = std::move(next);
  }
  if (mode == RuleMode::report_all) return merged;

  ReportedSet out;
  for (DocPos pos : merged) {
    const auto& c = index.comment(pos);
    if (!c.pred) {
      if (strictness == Strictness::strict) {
        throw Error(ErrorKind::precondition, "comment " + c.id + " has no prediction");
      }
      continue;
    }
    if (c.pred->is_toxic()) out.push_back(pos);
  }
  return out;
}

ReportedSet reported_set(const InvertedIndex& index, const RuleSet& rules, Strictness strictness) {
  auto keywords = rules.keywords();
  return reported_set(index, keywords, rules.mode(), strictness);
}

std::vector<std::string> reported_ids(const InvertedIndex& index, const ReportedSet& set) {
  std::vector<std::string> ids;
  ids.reserve(set.size());
  for (DocPos pos : set) ids.push_back(index.id_of(pos));
  return ids;
}

RuleSet parse_ruleset(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid, std::string("malformed ruleset JSON (") + e.what() + ")");
  }
  if (!doc.is_object()) throw Error(ErrorKind::invalid, "ruleset must be a JSON object");

  RuleMode mode = RuleMode::delegation;
  if (auto it = doc.find("mode"); it != doc.end()) {
    auto parsed = it->is_string() ? parse_rule_mode(it->get<std::string>()) : std::nullopt;
    if (!parsed) throw Error(ErrorKind::invalid, "unknown rule mode", "mode");
    mode = *parsed;
  }
  auto rules_it = doc.find("rules");
  if (rules_it == doc.end() || !rules_it->is_array()) {
    throw Error(ErrorKind::invalid, "ruleset needs a \"rules\" array", "rules");
  }
  std::vector<std::string> raw;
  for (const auto& r : *rules_it) {
    if (!r.is_string()) throw Error(ErrorKind::invalid, "rules must be strings", "rules");
    raw.push_back(r.get<std::string>());
  }
  return RuleSet::from_keywords(mode, raw);
}

RuleSet load_ruleset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::not_found, "cannot read ruleset file " + path.string(), "path");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_ruleset(buffer.str());
}

std::string ruleset_to_json(const RuleSet& rules) {
  nlohmann::ordered_json doc;
  doc["mode"] = to_string(rules.mode());
  doc["rules"] = rules.keywords();
  return doc.dump();
}

}  // namespace condel
