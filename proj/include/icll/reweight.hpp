#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icll/dataset.hpp"
#include "icll/metrics.hpp"
#include "icll/rng.hpp"

namespace icll::reweight {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Variant { Counts, Frequencies, Binary };

/// "lnw", "lnw_r", "lnw_b".
std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct FeatureSpec {
  Variant variant = Variant::Frequencies;
  std::vector<int> orders{1, 2, 3};

  int width() const { return static_cast<int>(orders.size()) * kVocabSize; }
};

/// Features for predicting prefix[i] from prefix[0, i). For each order n the
/// block holds, for every vocabulary id w, the number of times the n-1 tokens
/// ending at i-1 are followed by w inside prefix[0, i): minus one for Counts,
/// divided by the block total for Frequencies (0 when the total is 0),
/// thresholded at one occurrence for Binary. Delimiters are ordinary tokens.
VectorXd extract_features(std::span<const Token> prefix, std::size_t i, const FeatureSpec& spec);

/// Row i equals extract_features(tokens, i, spec); computed incrementally.
MatrixXd instance_features(std::span<const Token> tokens, const FeatureSpec& spec);

struct MlpParams {
  MatrixXd W1;  // features x hidden
  VectorXd b1;
  MatrixXd W2;  // hidden x vocab
  VectorXd b2;

  int hidden() const { return static_cast<int>(W1.cols()); }
  static MlpParams zeros(int features, int hidden, int vocab = kVocabSize);
  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  static MlpParams init(int features, int hidden, Rng& rng, int vocab = kVocabSize);
  bool operator==(const MlpParams& other) const;
};

struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DivergenceDetected : std::runtime_error {
  DivergenceDetected(const std::string& what, double last_finite_loss)
      : std::runtime_error(what), last_finite_loss(last_finite_loss) {}
  double last_finite_loss;
};

double gelu(double x);
double gelu_grad(double x);

/// logits = gelu(X W1 + b1) W2 + b2, one row per feature row.
MatrixXd mlp_forward(const MatrixXd& features, const MlpParams& params);

struct Gradients {
  double loss = 0.0;  // mean cross-entropy
  MlpParams grad;
};

/// Mean next-token cross-entropy over the rows and its gradient.
Gradients loss_and_gradients(const MatrixXd& features, std::span<const Token> targets, const MlpParams& params);

struct TrainConfig {
  int hidden = 1024;
  int epochs = 50;
  int batch_size = 32;  // instances per step
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  int patience = 5;
  double factor = 0.5;
  double min_lr = 1e-5;
  double plateau_threshold = 1e-4;  // relative improvement that resets patience
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  MlpParams params;
  double initial_loss = 0.0;  // mean loss of the initialized network over the train split
  std::vector<EpochRecord> curve;
};

/// Minimizes mean next-token cross-entropy over every position of the train
/// split with Adam and reduce-on-plateau on the epoch-mean loss.
TrainResult train(const std::vector<ProblemInstance>& instances, const FeatureSpec& spec, const TrainConfig& config,
                  Rng& rng);

/// Token-weighted mean cross-entropy over all positions.
double mean_loss(const std::vector<ProblemInstance>& instances, const FeatureSpec& spec, const MlpParams& params);

PredictionTrace predict_instance(const ProblemInstance& instance, const MlpParams& params, const FeatureSpec& spec);

struct Model {
  FeatureSpec spec;
  MlpParams params;
};

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

std::string curve_to_csv(const std::vector<EpochRecord>& curve);

}  // namespace icll::reweight
