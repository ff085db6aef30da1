#include "condel/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "condel/error.hpp"
#include "detail/json_fields.hpp"

namespace condel {

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

LinearRationaleModel::LinearRationaleModel(WeightMap weights, double bias, double threshold,
                                           double rho)
    : weights_(std::move(weights)), bias_(bias), threshold_(threshold), rho_(rho) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(ErrorKind::invalid, "threshold outside [0,1]", "threshold");
  }
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw Error(ErrorKind::invalid, "rho must be positive", "rho");
  }
  if (!std::isfinite(bias)) throw Error(ErrorKind::invalid, "bias must be finite", "bias");
}

double LinearRationaleModel::weight(std::string_view token) const {
  auto it = weights_.find(token);
  return it == weights_.end() ? 0.0 : it->second;
}

double LinearRationaleModel::logit(std::string_view text) const {
  double z = bias_;
  for (const auto& token : tokenize(text)) z += weight(token.text);
  return z;
}

Prediction LinearRationaleModel::predict(std::string_view text) const {
  Prediction pred;
  double z = bias_;
  for (const auto& token : tokenize(text)) {
    double w = weight(token.text);
    z += w;
    if (w >= rho_) pred.rationale.push_back(token.span);
  }
  pred.prob = logistic(z);
  pred.label = label_for(pred.prob, threshold_);
  return pred;
}

std::string model_to_json(const LinearRationaleModel& model) {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json weights = nlohmann::ordered_json::object();
  for (const auto& [token, w] : model.weights()) weights[token] = w;
  doc["weights"] = std::move(weights);
  doc["bias"] = model.bias();
  doc["threshold"] = model.threshold();
  doc["rho"] = model.rho();
  return doc.dump(2) + "\n";
}

LinearRationaleModel parse_model(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid, std::string("malformed model JSON (") + e.what() + ")");
  }
  auto number = [&](const char* key) {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_number()) {
      throw Error(ErrorKind::invalid, std::string("model needs numeric \"") + key + "\"", key);
    }
    return it->get<double>();
  };
  if (!doc.is_object() || !doc.contains("weights") || !doc["weights"].is_object()) {
    throw Error(ErrorKind::invalid, "model needs a \"weights\" object", "weights");
  }
  LinearRationaleModel::WeightMap weights;
  for (const auto& [token, w] : doc["weights"].items()) {
    if (!w.is_number()) throw Error(ErrorKind::invalid, "weight for " + token + " is not a number", "weights");
    weights.emplace(token, w.get<double>());
  }
  return LinearRationaleModel(std::move(weights), number("bias"), number("threshold"), number("rho"));
}

LinearRationaleModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::not_found, "cannot read model file " + path.string(), "path");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_model(buffer.str());
}

void save_model(const LinearRationaleModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::not_found, "cannot write " + path.string(), "path");
  out << model_to_json(model);
}

// ---------------------------------------------------------------------------

TrainingSet make_training_set(const Corpus& corpus) {
  if (corpus.comments.empty()) throw Error(ErrorKind::invalid, "empty corpus");
  std::map<std::string, std::uint32_t, std::less<>> vocab;
  std::size_t toxic = 0;
  for (const auto& c : corpus.comments) {
    if (!c.gold) throw Error(ErrorKind::invalid, "comment " + c.id + " has no gold label", "gold");
    if (*c.gold == Label::toxic) ++toxic;
    for (auto& token : tokenize(c.text)) vocab.emplace(std::move(token.text), 0);
  }
  if (toxic == 0 || toxic == corpus.comments.size()) {
    throw Error(ErrorKind::invalid, "single-class corpus", "gold");
  }

  TrainingSet data;
  std::uint32_t next = 0;
  for (auto& [token, id] : vocab) {
    id = next++;
    data.vocabulary.push_back(token);
  }
  for (const auto& c : corpus.comments) {
    std::map<std::uint32_t, double> counts;
    for (const auto& token : tokenize(c.text)) counts[vocab.find(token.text)->second] += 1.0;
    data.rows.emplace_back(counts.begin(), counts.end());
    data.targets.push_back(*c.gold == Label::toxic ? 1.0 : 0.0);
  }
  return data;
}

namespace {

double row_logit(const std::vector<std::pair<std::uint32_t, double>>& row,
                 const LinearParameters& params) {
  double z = params.bias;
  for (const auto& [feature, count] : row) z += params.weights[feature] * count;
  return z;
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

}  // namespace

double training_loss(const TrainingSet& data, const LinearParameters& params, double l1) {
  double loss = 0.0;
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    double z = row_logit(data.rows[i], params);
    loss += softplus(z) - data.targets[i] * z;
  }
  loss /= static_cast<double>(data.rows.size());
  double penalty = 0.0;
  for (double w : params.weights) penalty += std::abs(w);
  return loss + l1 * penalty;
}

LinearParameters training_gradient(const TrainingSet& data, const LinearParameters& params,
                                   double l1) {
  LinearParameters grad;
  grad.weights.assign(params.weights.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(data.rows.size());
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    double residual = (logistic(row_logit(data.rows[i], params)) - data.targets[i]) * scale;
    grad.bias += residual;
    for (const auto& [feature, count] : data.rows[i]) grad.weights[feature] += residual * count;
  }
  for (std::size_t j = 0; j < params.weights.size(); ++j) grad.weights[j] += l1 * sign(params.weights[j]);
  return grad;
}

namespace {

double unit_interval(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Smallest candidate rho whose mean rationale fraction over the given
// comments stays within the cap. For a fixed comment set each fraction is
// non-increasing in rho, so the mean is too and a binary search is exact.
double select_rho(const TrainingSet& data, const LinearParameters& params,
                  const std::vector<std::size_t>& nontoxic_rows,
                  const std::vector<std::size_t>& token_counts, double cap) {
  std::vector<double> candidates;
  for (double w : params.weights) {
    if (w > 0) candidates.push_back(w);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.empty()) return 1.0;
  if (nontoxic_rows.empty()) return candidates.front();

  auto mean_fraction = [&](double rho) {
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t row : nontoxic_rows) {
      if (token_counts[row] == 0) continue;
      double kept = 0.0;
      for (const auto& [feature, count] : data.rows[row]) {
        if (params.weights[feature] >= rho) kept += count;
      }
      total += kept / static_cast<double>(token_counts[row]);
      ++counted;
    }
    return counted == 0 ? 0.0 : total / static_cast<double>(counted);
  };

  std::size_t lo = 0, hi = candidates.size() - 1;
  if (mean_fraction(candidates[hi]) > cap) return candidates[hi];
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    if (mean_fraction(candidates[mid]) <= cap) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return candidates[lo];
}

}  // namespace

LinearRationaleModel train_linear(const Corpus& corpus, const TrainConfig& config) {
  if (config.epochs < 1) throw Error(ErrorKind::invalid, "epochs must be at least 1", "epochs");
  if (!(config.learning_rate > 0)) {
    throw Error(ErrorKind::invalid, "learning_rate must be positive", "learning_rate");
  }
  if (!(config.l1_penalty >= 0)) throw Error(ErrorKind::invalid, "l1_penalty must be >= 0", "l1");

  const TrainingSet data = make_training_set(corpus);
  std::mt19937_64 rng(config.seed);
  LinearParameters params;
  params.weights.resize(data.vocabulary.size());
  for (auto& w : params.weights) w = (unit_interval(rng) - 0.5) * 0.02;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto grad = training_gradient(data, params, config.l1_penalty);
    params.bias -= config.learning_rate * grad.bias;
    for (std::size_t j = 0; j < params.weights.size(); ++j) {
      params.weights[j] -= config.learning_rate * grad.weights[j];
    }
  }

  double rho = 0.0;
  if (config.rho) {
    rho = *config.rho;
  } else {
    std::vector<std::size_t> nontoxic_rows;
    std::vector<std::size_t> token_counts(data.rows.size(), 0);
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
      for (const auto& [feature, count] : data.rows[i]) token_counts[i] += static_cast<std::size_t>(count);
      if (label_for(logistic(row_logit(data.rows[i], params)), config.threshold) == Label::nontoxic) {
        nontoxic_rows.push_back(i);
      }
    }
    rho = select_rho(data, params, nontoxic_rows, token_counts, config.sparsity_cap);
  }

  LinearRationaleModel::WeightMap weights;
  for (std::size_t j = 0; j < params.weights.size(); ++j) {
    double w = params.weights[j];
    if (w > 0 && w < rho) w = 0.0;
    if (w != 0.0) weights.emplace(data.vocabulary[j], w);
  }
  return LinearRationaleModel(std::move(weights), params.bias, config.threshold, rho);
}

// ---------------------------------------------------------------------------

Corpus annotate(const RationaleClassifier& model, Corpus corpus) {
  corpus.threshold = model.threshold();
  for (auto& c : corpus.comments) c.pred = model.predict(c.text);
  return corpus;
}

Corpus import_predictions(Corpus corpus, std::istream& in) {
  std::unordered_map<std::string, std::size_t> positions;
  for (std::size_t i = 0; i < corpus.comments.size(); ++i) positions.emplace(corpus.comments[i].id, i);

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
      if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string()) {
        throw Error(ErrorKind::invalid, "prediction record needs a string id", "id");
      }
      auto id = obj["id"].get<std::string>();
      auto it = positions.find(id);
      if (it == positions.end()) throw Error(ErrorKind::not_found, "unknown id " + id, "id");
      if (!obj.contains("prob")) throw Error(ErrorKind::invalid, "prediction record needs prob", "prob");

      Comment updated = corpus.comments[it->second];
      updated.pred = detail::parse_prediction(obj, corpus.threshold);
      validate_comment(updated, corpus.threshold);
      corpus.comments[it->second] = std::move(updated);
    } catch (const Error& e) {
      throw detail::at_line(e, line_no);
    }
  }
  return corpus;
}

Corpus import_predictions(Corpus corpus, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::not_found, "cannot read predictions file " + path.string(), "path");
  try {
    return import_predictions(std::move(corpus), in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what(), e.field());
  }
}

std::vector<PRPoint> pr_curve(const Corpus& corpus, std::span<const double> thresholds,
                              Strictness strictness) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] >= 0.0 && thresholds[i] <= 1.0)) {
      throw Error(ErrorKind::invalid, "threshold outside [0,1]", "thresholds");
    }
    if (i > 0 && thresholds[i] < thresholds[i - 1]) {
      throw Error(ErrorKind::invalid, "thresholds must be ascending", "thresholds");
    }
  }

  std::vector<std::pair<double, bool>> scored;  // (prob, gold toxic)
  std::size_t gold_toxic = 0;
  for (const auto& c : corpus.comments) {
    if (!c.gold || !c.pred) {
      if (strictness == Strictness::strict) {
        throw Error(ErrorKind::precondition,
                    "comment " + c.id + (c.gold ? " has no prediction" : " has no gold label"));
      }
      continue;
    }
    bool toxic = *c.gold == Label::toxic;
    gold_toxic += toxic ? 1 : 0;
    scored.emplace_back(c.pred->prob, toxic);
  }
  if (gold_toxic == 0) throw Error(ErrorKind::precondition, "recall undefined: no gold-toxic comments");

  std::vector<PRPoint> curve;
  curve.reserve(thresholds.size());
  for (double t : thresholds) {
    std::size_t positives = 0, hits = 0;
    for (const auto& [prob, toxic] : scored) {
      if (prob >= t) {
        ++positives;
        hits += toxic ? 1 : 0;
      }
    }
    PRPoint point;
    point.threshold = t;
    if (positives > 0) point.precision = static_cast<double>(hits) / static_cast<double>(positives);
    point.recall = static_cast<double>(hits) / static_cast<double>(gold_toxic);
    curve.push_back(point);
  }
  return curve;
}

double rationale_fraction(const Comment& comment) {
  auto tokens = tokenize(comment.text);
  if (tokens.empty() || !comment.pred) return 0.0;
  std::size_t kept = 0;
  for (const auto& token : tokens) {
    for (const auto& span : comment.pred->rationale) {
      if (token.span.overlaps(span)) {
        ++kept;
        break;
      }
    }
  }
  return static_cast<double>(kept) / static_cast<double>(tokens.size());
}

SparsityReport rationale_sparsity(const Corpus& corpus) {
  double sum[2] = {0.0, 0.0};
  std::size_t count[2] = {0, 0};
  for (const auto& c : corpus.comments) {
    if (!c.pred || tokenize(c.text).empty()) continue;
    int cls = c.pred->is_toxic() ? 0 : 1;
    sum[cls] += rationale_fraction(c);
    ++count[cls];
  }
  SparsityReport report;
  if (count[0] > 0) report.predicted_toxic = sum[0] / static_cast<double>(count[0]);
  if (count[1] > 0) report.predicted_nontoxic = sum[1] / static_cast<double>(count[1]);
  return report;
}

}  // namespace condel
