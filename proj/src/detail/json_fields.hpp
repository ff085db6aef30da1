#pragma once

// Field parsing shared by the corpus loader and the prediction importer.

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

#include "condel/corpus.hpp"
#include "condel/error.hpp"

namespace condel::detail {

inline std::string line_suffix(std::size_t line) { return " at line " + std::to_string(line); }

inline Error at_line(const Error& e, std::size_t line) {
  return Error(e.kind(), e.what() + line_suffix(line), e.field());
}

inline std::optional<Label> optional_label(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorKind::invalid, "unknown label", key);
  auto label = parse_label(it->get<std::string>());
  if (!label) throw Error(ErrorKind::invalid, "unknown label", key);
  return label;
}

inline std::vector<TokenSpan> parse_rationale(const nlohmann::json& value) {
  if (!value.is_array()) throw Error(ErrorKind::invalid, "rationale must be an array", "rationale");
  std::vector<TokenSpan> spans;
  spans.reserve(value.size());
  for (const auto& pair : value) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_unsigned() ||
        !pair[1].is_number_unsigned()) {
      // negative offsets parse as signed integers and land here too
      if (pair.is_array() && pair.size() == 2 && pair[0].is_number_integer() &&
          pair[1].is_number_integer()) {
        throw Error(ErrorKind::invalid, "span out of bounds", "rationale");
      }
      throw Error(ErrorKind::invalid, "rationale span must be [start, end]", "rationale");
    }
    spans.push_back({pair[0].get<std::size_t>(), pair[1].get<std::size_t>()});
  }
  return spans;
}

// Reads pred/prob/rationale. Returns nullopt when none of them is present.
inline std::optional<Prediction> parse_prediction(const nlohmann::json& obj, double threshold) {
  auto label = optional_label(obj, "pred");
  auto prob_it = obj.find("prob");
  bool has_prob = prob_it != obj.end() && !prob_it->is_null();
  auto rat_it = obj.find("rationale");
  bool has_rationale = rat_it != obj.end() && !rat_it->is_null();

  if (!has_prob) {
    if (label) throw Error(ErrorKind::invalid, "pred without prob", "prob");
    if (has_rationale) throw Error(ErrorKind::invalid, "rationale without prob", "prob");
    return std::nullopt;
  }
  if (!prob_it->is_number()) throw Error(ErrorKind::invalid, "prob must be a number", "prob");
  double prob = prob_it->get<double>();
  if (!(prob >= 0.0 && prob <= 1.0)) throw Error(ErrorKind::invalid, "prob outside [0,1]", "prob");

  Prediction pred;
  pred.prob = prob;
  pred.label = label.value_or(label_for(prob, threshold));
  if (has_rationale) pred.rationale = parse_rationale(*rat_it);
  return pred;
}

inline nlohmann::ordered_json rationale_json(const std::vector<TokenSpan>& spans) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : spans) arr.push_back({s.start, s.end});
  return arr;
}

}  // namespace condel::detail
