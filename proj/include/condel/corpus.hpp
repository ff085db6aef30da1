#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace condel {

enum class Label { toxic, nontoxic };

std::string_view to_string(Label label);
// Accepts exactly "toxic" or "nontoxic".
std::optional<Label> parse_label(std::string_view text);

// Half-open range of Unicode scalar values within a comment's text.
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool overlaps(const TokenSpan& other) const {
    return start < other.end && other.start < end;
  }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct Prediction {
  Label label = Label::nontoxic;
  double prob = 0.0;  // probability of the toxic class
  std::vector<TokenSpan> rationale;

  bool is_toxic() const { return label == Label::toxic; }
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// The boundary is inclusive: prob == threshold is toxic.
inline Label label_for(double prob, double threshold) {
  return prob >= threshold ? Label::toxic : Label::nontoxic;
}

struct Comment {
  std::string id;
  std::string text;  // UTF-8
  std::optional<Label> gold;
  std::optional<Prediction> pred;

  bool predicted_toxic() const { return pred && pred->is_toxic(); }
  friend bool operator==(const Comment&, const Comment&) = default;
};

inline constexpr double kDefaultThreshold = 0.5;

struct Corpus {
  std::string name;  // distribution tag, e.g. "wikiattack"
  double threshold = kDefaultThreshold;
  std::vector<Comment> comments;

  std::size_t size() const { return comments.size(); }
  bool has_predictions() const;
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

// Whether metrics fail on comments lacking a gold label (strict) or skip them.
enum class Strictness { strict, lenient };

// ---------------------------------------------------------------------------
// UTF-8 helpers. Offsets are always counted in Unicode scalar values.

bool is_valid_utf8(std::string_view text);
// Invalid sequences decode to U+FFFD.
std::u32string to_utf32(std::string_view text);
std::string to_utf8(std::u32string_view text);
std::size_t scalar_length(std::string_view text);
std::string substr_scalars(std::string_view text, TokenSpan span);
std::string lowercase(std::string_view text);

// ---------------------------------------------------------------------------
// Tokenization

struct Token {
  std::string text;  // lowercased
  TokenSpan span;
  friend bool operator==(const Token&, const Token&) = default;
};

// Tokens are maximal runs of alphanumerics, with apostrophes kept when they
// sit between two alphanumerics ("i'm"). Every token is lowercased.
std::vector<Token> tokenize(std::string_view text);

// Sorted, duplicate-free token strings of `text`.
std::vector<std::string> token_set(std::string_view text);

// Token-exact, case-insensitive containment. `keyword` must already be a
// single lowercase token.
bool contains(const Comment& comment, std::string_view keyword);

// ---------------------------------------------------------------------------
// Validation and JSONL I/O

// Checks Comment/Prediction invariants against `threshold`; throws Error.
void validate_comment(const Comment& comment, double threshold);
// Checks every comment plus id uniqueness and the name; throws Error.
void validate_corpus(const Corpus& corpus);

struct LoadOptions {
  std::optional<std::string> name;  // defaults to the file stem
  double threshold = kDefaultThreshold;
};

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options = {});
Corpus parse_corpus(std::istream& in, std::string name, double threshold = kDefaultThreshold);
std::string serialize_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Copy of `corpus` with every prediction removed.
Corpus strip_predictions(Corpus corpus);

}  // namespace condel
