#include <algorithm>

#include "condel/error.hpp"
#include "condel/rules.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/oracle.hpp"

using namespace condel;

namespace {

using Ids = std::vector<std::string>;

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

bool subset(const ReportedSet& a, const ReportedSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

TEST_CASE("normalize_keyword") {
  CHECK(normalize_keyword("  Idiot ") == "idiot");
  CHECK(normalize_keyword("fuck") == "fuck");
  CHECK(normalize_keyword("IDIOT!") == "idiot");
  CHECK(normalize_keyword("Don't") == "don't");
  CHECK(error_of([] { normalize_keyword("go away"); }) == "multi-token keyword");
  CHECK(error_of([] { normalize_keyword("!!!"); }) == "keyword has no token");
  CHECK(error_of([] { normalize_keyword("   "); }) == "empty keyword");
  CHECK(error_of([] { normalize_keyword(""); }) == "empty keyword");
}

TEST_CASE("add_rule and remove_rule") {
  RuleSet empty;
  auto one = add_rule(empty, "idiot");
  CHECK(empty.empty());
  CHECK(one.keywords() == Ids{"idiot"});
  CHECK(error_of([&] { add_rule(one, "idiot"); }) == "duplicate rule");
  CHECK(error_of([&] { add_rule(one, " IDIOT "); }) == "duplicate rule");

  auto a = add_rule(RuleSet(), "A");
  CHECK(remove_rule(a, "a").empty());
  CHECK(error_of([&] { remove_rule(a, "b"); }) == "no such rule");

  auto two = add_rule(add_rule(RuleSet(), "idiot"), "fucking");
  CHECK(two.keywords() == Ids{"idiot", "fucking"});
  CHECK(remove_rule(two, "idiot").keywords() == Ids{"fucking"});
  CHECK(two.size() == 2);
}

TEST_CASE("rule_stats on F1") {
  auto index = InvertedIndex::build(testing::load_f1());
  CHECK(rule_stats(index, "idiot") == RuleStats{3, 1});
  CHECK(rule_stats(index, "fucking") == RuleStats{2, 2});
  CHECK(rule_stats(index, "zebra") == RuleStats{0, 0});
}

TEST_CASE("reported_set on F1") {
  auto index = InvertedIndex::build(testing::load_f1());
  auto delegation = RuleSet::from_keywords(RuleMode::delegation, Ids{"idiot", "fucking"});
  CHECK(reported_ids(index, reported_set(index, delegation)) == Ids{"c1", "c2"});
  CHECK(reported_ids(index, reported_set(index, delegation.with_mode(RuleMode::report_all))) ==
        Ids{"c1", "c2", "c5", "c6"});
  CHECK(reported_set(index, RuleSet(RuleMode::delegation)).empty());
  CHECK(reported_set(index, RuleSet(RuleMode::report_all)).empty());
}

TEST_CASE("reported_set strictness on missing predictions") {
  auto f1 = strip_predictions(testing::load_f1());
  auto index = InvertedIndex::build(f1);
  auto rules = RuleSet::from_keywords(RuleMode::delegation, Ids{"idiot"});
  CHECK_THROWS_AS(reported_set(index, rules), Error);
  CHECK(reported_set(index, rules, Strictness::lenient).empty());
  CHECK(reported_set(index, rules.with_mode(RuleMode::report_all)).size() == 3);
}

TEST_CASE("reported-set properties on random corpora") {
  std::mt19937_64 rng(11);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto corpus = testing::synthetic_corpus(seed);
    auto index = InvertedIndex::build(corpus);
    auto keywords = testing::random_keywords(rng, 40, 10);
    auto delegation = RuleSet::from_keywords(RuleMode::delegation, keywords);
    auto report_all = delegation.with_mode(RuleMode::report_all);

    auto d = reported_set(index, delegation);
    auto r = reported_set(index, report_all);
    CHECK(subset(d, r));
    CHECK(r.size() <= corpus.size());
    for (auto pos : d) CHECK(index.comment(pos).predicted_toxic());
    CHECK(reported_ids(index, d) == oracle::reported_ids(corpus, keywords, true));
    CHECK(reported_ids(index, r) == oracle::reported_ids(corpus, keywords, false));

    // monotone under adding a rule
    auto extra = testing::vocab_word(testing::below(rng, 40));
    if (!delegation.has(extra)) {
      CHECK(subset(d, reported_set(index, delegation.with_rule(extra))));
      CHECK(subset(r, reported_set(index, report_all.with_rule(extra))));
    }

    // order-insensitive
    auto shuffled = keywords;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(reported_set(index, RuleSet::from_keywords(RuleMode::delegation, shuffled)) == d);
  }
}

TEST_CASE("ruleset JSON file format") {
  auto rules = parse_ruleset(R"({"mode":"report_all","rules":["Idiot","fucking"]})");
  CHECK(rules.mode() == RuleMode::report_all);
  CHECK(rules.keywords() == Ids{"idiot", "fucking"});
  CHECK(ruleset_to_json(rules) == R"({"mode":"report_all","rules":["idiot","fucking"]})");
  CHECK(parse_ruleset(ruleset_to_json(rules)).keywords() == rules.keywords());
  CHECK(parse_ruleset(R"({"rules":[]})").mode() == RuleMode::delegation);
  CHECK(error_of([] { parse_ruleset(R"({"mode":"both","rules":[]})"); }) == "unknown rule mode");
  CHECK(error_of([] { parse_ruleset(R"({"rules":["a","A"]})"); }) == "duplicate rule");
  CHECK(error_of([] { parse_ruleset(R"({"rules":["go away"]})"); }) == "multi-token keyword");
  CHECK_THROWS_AS(parse_ruleset("not json"), Error);
}
