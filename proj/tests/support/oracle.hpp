#pragma once

// Brute-force reference metrics. Works directly on comment text with its own
// ASCII word splitter; shares no code with the index, rules or metrics
// modules. Only valid for ASCII corpora without apostrophes.

#include <cctype>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "condel/corpus.hpp"

namespace condel::oracle {

inline std::set<std::string> words_of(const std::string& text) {
  std::set<std::string> out;
  std::string current;
  for (char ch : text + " ") {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!current.empty()) {
      out.insert(current);
      current.clear();
    }
  }
  return out;
}

inline bool has_word(const Comment& c, const std::string& keyword) { return words_of(c.text).count(keyword) > 0; }

inline bool reports(const Comment& c, const std::vector<std::string>& keywords, bool delegation) {
  bool matched = false;
  for (const auto& k : keywords) matched = matched || has_word(c, k);
  if (!matched) return false;
  return !delegation || (c.pred && c.pred->label == Label::toxic);
}

inline std::vector<std::string> reported_ids(const Corpus& corpus, const std::vector<std::string>& keywords,
                                             bool delegation) {
  std::vector<std::string> ids;
  for (const auto& c : corpus.comments) {
    if (reports(c, keywords, delegation)) ids.push_back(c.id);
  }
  return ids;
}

struct Tally {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::optional<double> precision() const {
    if (tp + fp == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
};

inline Tally tally(const Corpus& corpus, const std::vector<std::string>& keywords, bool delegation) {
  Tally t;
  for (const auto& c : corpus.comments) {
    if (!reports(c, keywords, delegation)) continue;
    if (c.gold == Label::toxic) {
      ++t.tp;
    } else {
      ++t.fp;
    }
  }
  return t;
}

struct Metrics {
  std::vector<std::optional<double>> per_rule;
  std::optional<double> average;
  std::size_t defined = 0;
  std::optional<double> union_precision;
  std::size_t coverage = 0;
  std::int64_t reward = 0;
  std::optional<double> model_alone;
};

inline Metrics metrics(const Corpus& corpus, const std::vector<std::string>& keywords, bool delegation) {
  Metrics m;
  double sum = 0.0;
  for (const auto& k : keywords) {
    auto p = tally(corpus, {k}, delegation).precision();
    m.per_rule.push_back(p);
    if (p) {
      sum += *p;
      ++m.defined;
    }
  }
  if (m.defined > 0) m.average = sum / static_cast<double>(m.defined);
  auto all = tally(corpus, keywords, delegation);
  m.union_precision = all.precision();
  m.coverage = static_cast<std::size_t>(all.tp + all.fp);
  m.reward = all.tp - all.fp;
  Tally model;
  for (const auto& c : corpus.comments) {
    if (!(c.pred && c.pred->label == Label::toxic)) continue;
    if (c.gold == Label::toxic) {
      ++model.tp;
    } else {
      ++model.fp;
    }
  }
  m.model_alone = model.precision();
  return m;
}

}  // namespace condel::oracle
