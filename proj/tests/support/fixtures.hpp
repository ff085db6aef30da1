#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "condel/corpus.hpp"

#ifndef CONDEL_TEST_DATA_DIR
#error "CONDEL_TEST_DATA_DIR must point at tests/data"
#endif

namespace condel::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(CONDEL_TEST_DATA_DIR) / name;
}

inline Corpus load_f1() { return load_corpus(data_path("f1.jsonl")); }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("condel-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline std::size_t below(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

struct SyntheticOptions {
  std::size_t max_comments = 200;
  std::size_t vocab = 40;
  bool with_predictions = true;
  bool with_rationales = false;
};

inline std::string vocab_word(std::size_t i) { return "w" + std::to_string(i); }

// Random ASCII corpus: words "w0".."wN" (some capitalized) joined by assorted
// punctuation, random gold labels, predictions loosely correlated with gold.
inline Corpus synthetic_corpus(std::uint64_t seed, const SyntheticOptions& options = {}) {
  std::mt19937_64 rng(seed);
  static const char* kSeparators[] = {" ", ", ", "! ", " - ", "? ", "... "};
  Corpus corpus;
  corpus.name = "synthetic-" + std::to_string(seed);
  const std::size_t n = 1 + below(rng, options.max_comments);
  const std::size_t vocab = 1 + below(rng, options.vocab);
  for (std::size_t i = 0; i < n; ++i) {
    Comment c;
    c.id = "s" + std::to_string(i);
    const std::size_t words = 1 + below(rng, 10);
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (std::size_t w = 0; w < words; ++w) {
      if (w > 0) c.text += kSeparators[below(rng, 6)];
      std::string word = vocab_word(below(rng, vocab));
      if (below(rng, 5) == 0) word[0] = 'W';
      spans.emplace_back(c.text.size(), c.text.size() + word.size());
      c.text += word;
    }
    bool toxic = below(rng, 2) == 0;
    c.gold = toxic ? Label::toxic : Label::nontoxic;
    if (options.with_predictions) {
      Prediction p;
      double base = toxic ? 0.65 : 0.35;
      p.prob = std::clamp(base + (unit(rng) - 0.5) * 0.9, 0.0, 1.0);
      p.label = label_for(p.prob, corpus.threshold);
      if (options.with_rationales) {
        for (const auto& [s, e] : spans) {
          if (below(rng, 3) == 0) p.rationale.push_back({s, e});
        }
      }
      c.pred = p;
    }
    corpus.comments.push_back(std::move(c));
  }
  return corpus;
}

inline std::vector<std::string> random_keywords(std::mt19937_64& rng, std::size_t vocab,
                                                std::size_t max_rules) {
  std::vector<std::string> out;
  const std::size_t n = below(rng, max_rules + 1);
  for (std::size_t i = 0; i < n; ++i) {
    // a few keywords fall outside the vocabulary to exercise empty matches
    auto word = vocab_word(below(rng, vocab + 3));
    if (std::find(out.begin(), out.end(), word) == out.end()) out.push_back(word);
  }
  return out;
}


inline constexpr std::size_t kDesignatedTokens = 5;
inline std::string designated_word(std::size_t i) { return "slur" + std::to_string(i); }

// Linearly separable by construction: every toxic comment carries exactly one
// designated token, nontoxic comments never do. Filler words are shared.
inline Corpus separable_corpus(std::uint64_t seed, std::size_t n = 120) {
  std::mt19937_64 rng(seed);
  Corpus corpus;
  corpus.name = "separable-" + std::to_string(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Comment c;
    c.id = "p" + std::to_string(i);
    const bool toxic = i % 2 == 0;
    const std::size_t fillers = 3 + below(rng, 8);
    const std::size_t slot = toxic ? below(rng, fillers + 1) : fillers + 1;
    for (std::size_t w = 0; w <= fillers; ++w) {
      if (!c.text.empty()) c.text += ' ';
      if (w == slot) {
        c.text += designated_word(below(rng, kDesignatedTokens));
      } else if (w < fillers) {
        c.text += "filler" + std::to_string(below(rng, 25));
      }
    }
    while (!c.text.empty() && c.text.back() == ' ') c.text.pop_back();
    c.gold = toxic ? Label::toxic : Label::nontoxic;
    corpus.comments.push_back(std::move(c));
  }
  return corpus;
}

// Comments containing "bait" are half toxic; the model is right on all but one
// in twenty of them. Other comments never contain the word.
inline Corpus bait_corpus(std::uint64_t seed, std::size_t matches = 200) {
  std::mt19937_64 rng(seed);
  Corpus corpus;
  corpus.name = "bait-" + std::to_string(seed);
  auto predicted = [&](bool toxic, bool correct) {
    const bool says_toxic = toxic == correct;
    double p = says_toxic ? 0.55 + 0.4 * unit(rng) : 0.45 * unit(rng);
    return Prediction{label_for(p, corpus.threshold), p, {}};
  };
  for (std::size_t i = 0; i < matches; ++i) {
    Comment c;
    c.id = "b" + std::to_string(i);
    c.text = "filler" + std::to_string(below(rng, 20)) + " bait filler" + std::to_string(below(rng, 20));
    const bool toxic = i % 2 == 0;
    c.gold = toxic ? Label::toxic : Label::nontoxic;
    c.pred = predicted(toxic, i % 20 != 7);
    corpus.comments.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < matches / 2; ++i) {
    Comment c;
    c.id = "o" + std::to_string(i);
    c.text = "filler" + std::to_string(below(rng, 20)) + " other";
    const bool toxic = below(rng, 2) == 0;
    c.gold = toxic ? Label::toxic : Label::nontoxic;
    c.pred = predicted(toxic, true);
    corpus.comments.push_back(std::move(c));
  }
  return corpus;
}

}  // namespace condel::testing
