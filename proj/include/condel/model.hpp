#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "condel/corpus.hpp"

namespace condel {

// Anything that labels a comment and commits to a rationale for it.
class RationaleClassifier {
 public:
  virtual ~RationaleClassifier() = default;
  virtual Prediction predict(std::string_view text) const = 0;
  virtual double threshold() const = 0;
};

// Logistic regression over the comment's token multiset. Tokens whose weight
// is at least `rho` form the rationale.
class LinearRationaleModel final : public RationaleClassifier {
 public:
  using WeightMap = std::map<std::string, double, std::less<>>;

  LinearRationaleModel(WeightMap weights, double bias, double threshold, double rho);

  Prediction predict(std::string_view text) const override;
  double threshold() const override { return threshold_; }

  double logit(std::string_view text) const;
  double weight(std::string_view token) const;
  const WeightMap& weights() const { return weights_; }
  double bias() const { return bias_; }
  double rho() const { return rho_; }

 private:
  WeightMap weights_;
  double bias_;
  double threshold_;
  double rho_;
};

double logistic(double z);

// Model parameter file: {"weights": {token: w}, "bias": b, "threshold": t, "rho": r}
std::string model_to_json(const LinearRationaleModel& model);
LinearRationaleModel parse_model(std::string_view json_text);
LinearRationaleModel load_model(const std::filesystem::path& path);
void save_model(const LinearRationaleModel& model, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double l1_penalty = 1e-3;
  int epochs = 300;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
  double threshold = kDefaultThreshold;
  // Largest mean rationale fraction allowed on predicted-nontoxic training
  // comments when rho is chosen automatically.
  double sparsity_cap = 0.05;
  std::optional<double> rho;  // overrides the automatic choice
};

// Bag-of-tokens design matrix in sparse form.
struct TrainingSet {
  std::vector<std::string> vocabulary;  // sorted
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;  // (feature, count)
  std::vector<double> targets;  // 1 = toxic
};

struct LinearParameters {
  std::vector<double> weights;  // aligned with TrainingSet::vocabulary
  double bias = 0.0;
};

// Throws Error(invalid) on an empty corpus, a missing gold label, or a corpus
// with only one class ("single-class corpus").
TrainingSet make_training_set(const Corpus& corpus);

// Mean cross-entropy plus l1 * sum |w| (the bias is not penalized).
double training_loss(const TrainingSet& data, const LinearParameters& params, double l1);
// Gradient of training_loss; the L1 term uses sign(w) with sign(0) = 0.
LinearParameters training_gradient(const TrainingSet& data, const LinearParameters& params,
                                   double l1);

// Full-batch gradient descent from a seeded small random start. Positive
// weights below the selected rho are pruned to zero, so every token with
// positive evidence belongs to the rationale.
LinearRationaleModel train_linear(const Corpus& corpus, const TrainConfig& config = {});

// ---------------------------------------------------------------------------
// Prediction sources and analysis

// Replaces every prediction with the classifier's output and adopts its
// threshold. Gold labels are untouched.
Corpus annotate(const RationaleClassifier& model, Corpus corpus);

// Merges a prediction JSONL file ({id, pred?, prob, rationale?} per line) by
// id. Comments missing from the file keep their prediction.
Corpus import_predictions(Corpus corpus, std::istream& in);
Corpus import_predictions(Corpus corpus, const std::filesystem::path& path);

struct PRPoint {
  double threshold = 0.0;
  std::optional<double> precision;  // absent when nothing is predicted positive
  double recall = 0.0;
};

// `thresholds` must be ascending within [0,1]. Positives are prob >= t.
std::vector<PRPoint> pr_curve(const Corpus& corpus, std::span<const double> thresholds,
                              Strictness strictness = Strictness::strict);

struct SparsityReport {
  std::optional<double> predicted_toxic;
  std::optional<double> predicted_nontoxic;
};

// Fraction of a comment's tokens overlapped by any rationale span, averaged
// per predicted class. Comments without a prediction or without tokens are
// skipped.
SparsityReport rationale_sparsity(const Corpus& corpus);
double rationale_fraction(const Comment& comment);

}  // namespace condel
