#include "condel/corpus.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "condel/error.hpp"
#include "detail/json_fields.hpp"

namespace condel {

std::string_view to_string(Label label) {
  return label == Label::toxic ? "toxic" : "nontoxic";
}

std::optional<Label> parse_label(std::string_view text) {
  if (text == "toxic") return Label::toxic;
  if (text == "nontoxic") return Label::nontoxic;
  return std::nullopt;
}

bool Corpus::has_predictions() const {
  return std::any_of(comments.begin(), comments.end(),
                     [](const Comment& c) { return c.pred.has_value(); });
}

// ---------------------------------------------------------------------------

bool is_valid_utf8(std::string_view text) {
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  int32_t length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) return false;
  }
  return true;
}

std::u32string to_utf32(std::string_view text) {
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  int32_t length = static_cast<int32_t>(text.size());
  std::u32string out;
  out.reserve(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    out.push_back(c < 0 ? U'�' : static_cast<char32_t>(c));
  }
  return out;
}

std::string to_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : text) {
    uint8_t buf[U8_MAX_LENGTH];
    int32_t n = 0;
    UBool error = false;
    U8_APPEND(buf, n, U8_MAX_LENGTH, static_cast<UChar32>(c), error);
    if (error) {
      out += "\xEF\xBF\xBD";
    } else {
      out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
    }
  }
  return out;
}

std::size_t scalar_length(std::string_view text) { return to_utf32(text).size(); }

std::string substr_scalars(std::string_view text, TokenSpan span) {
  auto wide = to_utf32(text);
  if (span.start >= wide.size()) return {};
  return to_utf8(std::u32string_view(wide).substr(span.start, span.length()));
}

std::string lowercase(std::string_view text) {
  auto wide = to_utf32(text);
  for (auto& c : wide) c = static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
  return to_utf8(wide);
}

// ---------------------------------------------------------------------------

namespace {

bool is_word_char(char32_t c) { return u_isalnum(static_cast<UChar32>(c)); }
bool is_apostrophe(char32_t c) { return c == U'\'' || c == U'’'; }

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  auto wide = to_utf32(text);
  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = wide.size();
  while (i < n) {
    if (!is_word_char(wide[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < n) {
      if (is_word_char(wide[i])) {
        ++i;
      } else if (is_apostrophe(wide[i]) && i + 1 < n && is_word_char(wide[i + 1])) {
        i += 2;
      } else {
        break;
      }
    }
    std::u32string lowered(wide.begin() + static_cast<std::ptrdiff_t>(start),
                           wide.begin() + static_cast<std::ptrdiff_t>(i));
    for (auto& c : lowered) c = static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
    tokens.push_back({to_utf8(lowered), {start, i}});
  }
  return tokens;
}

std::vector<std::string> token_set(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize(text)) out.push_back(std::move(t.text));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool contains(const Comment& comment, std::string_view keyword) {
  for (const auto& token : tokenize(comment.text)) {
    if (token.text == keyword) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------

void validate_comment(const Comment& comment, double threshold) {
  if (comment.id.empty()) throw Error(ErrorKind::invalid, "empty id", "id");
  if (comment.text.empty()) throw Error(ErrorKind::invalid, "empty text", "text");
  if (!is_valid_utf8(comment.text)) throw Error(ErrorKind::invalid, "invalid UTF-8 text", "text");
  if (!comment.pred) return;

  const auto& pred = *comment.pred;
  if (!(pred.prob >= 0.0 && pred.prob <= 1.0)) {
    throw Error(ErrorKind::invalid, "prob outside [0,1]", "prob");
  }
  if (pred.label != label_for(pred.prob, threshold)) {
    throw Error(ErrorKind::invalid, "pred inconsistent with prob at threshold", "pred");
  }
  const std::size_t length = scalar_length(comment.text);
  std::size_t previous_end = 0;
  for (const auto& span : pred.rationale) {
    if (span.start >= span.end || span.end > length) {
      throw Error(ErrorKind::invalid, "span out of bounds", "rationale");
    }
    if (span.start < previous_end) {
      throw Error(ErrorKind::invalid, "rationale spans unsorted or overlapping", "rationale");
    }
    previous_end = span.end;
  }
}

void validate_corpus(const Corpus& corpus) {
  if (corpus.name.empty()) throw Error(ErrorKind::invalid, "corpus name is empty", "name");
  if (!(corpus.threshold >= 0.0 && corpus.threshold <= 1.0)) {
    throw Error(ErrorKind::invalid, "threshold outside [0,1]", "threshold");
  }
  std::unordered_set<std::string_view> ids;
  for (const auto& c : corpus.comments) {
    validate_comment(c, corpus.threshold);
    if (!ids.insert(c.id).second) throw Error(ErrorKind::conflict, "duplicate id " + c.id, "id");
  }
}

namespace {

std::string required_string(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorKind::invalid, std::string("missing string field \"") + key + "\"", key);
  }
  return it->get<std::string>();
}

}  // namespace

Corpus parse_corpus(std::istream& in, std::string name, double threshold) {
  Corpus corpus;
  corpus.name = std::move(name);
  corpus.threshold = threshold;
  std::unordered_set<std::string> ids;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::invalid, std::string("malformed JSON (") + e.what() + ")");
      }
      if (!obj.is_object()) throw Error(ErrorKind::invalid, "malformed record: expected an object");

      Comment c;
      c.id = required_string(obj, "id");
      c.text = required_string(obj, "text");
      c.gold = detail::optional_label(obj, "gold");
      c.pred = detail::parse_prediction(obj, threshold);
      validate_comment(c, threshold);
      if (!ids.insert(c.id).second) throw Error(ErrorKind::conflict, "duplicate id " + c.id, "id");
      corpus.comments.push_back(std::move(c));
    } catch (const Error& e) {
      throw detail::at_line(e, line_no);
    }
  }
  validate_corpus(corpus);
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::not_found, "cannot read corpus file " + path.string(), "path");
  try {
    return parse_corpus(in, options.name.value_or(path.stem().string()), options.threshold);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what(), e.field());
  }
}

std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream out;
  for (const auto& c : corpus.comments) {
    nlohmann::ordered_json obj;
    obj["id"] = c.id;
    obj["text"] = c.text;
    if (c.gold) obj["gold"] = to_string(*c.gold);
    if (c.pred) {
      obj["pred"] = to_string(c.pred->label);
      obj["prob"] = c.pred->prob;
      obj["rationale"] = detail::rationale_json(c.pred->rationale);
    }
    out << obj.dump() << '\n';
  }
  return out.str();
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::not_found, "cannot write " + path.string(), "path");
  out << serialize_corpus(corpus);
}

Corpus strip_predictions(Corpus corpus) {
  for (auto& c : corpus.comments) c.pred.reset();
  return corpus;
}

}  // namespace condel
