#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "icll/dataset.hpp"
#include "icll/metrics.hpp"

namespace icll::nghead {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Causal exact-match attention over one token sequence. Row i attends
/// uniformly to every j < i such that the n tokens ending at j - shift equal
/// the n tokens ending at i. Rows without a match are all zero.
struct NgramMask {
  int n = 1;
  int shift = 1;
  MatrixXd rows;             // L x L
  std::vector<int> matches;  // nonzero entries per row

  int length() const { return static_cast<int>(rows.rows()); }
};

NgramMask build_mask(std::span<const Token> tokens, int n, int shift = 1);

/// Static n-gram head: out_t = W1 h_t + b1 + W2 (A(n) h)_t + b2.
struct NghWeights {
  MatrixXd W1, W2;  // d x d, applied to column vectors
  VectorXd b1, b2;

  int width() const { return static_cast<int>(W1.rows()); }
  static NghWeights zeros(int d);
};

struct BlockWeights {
  NghWeights ngh;
  VectorXd norm1, norm2;  // RMSNorm gains
  MatrixXd mlp_in, mlp_out;
  VectorXd mlp_in_bias, mlp_out_bias;

  int width() const { return ngh.width(); }
  static BlockWeights zeros(int d);
  /// Two head transforms and two MLP layers (4 d^2) plus biases and gains.
  static std::size_t parameter_count(int d);
};

inline constexpr double kRmsNormEps = 1e-5;

/// hidden is L x d, one row per position.
MatrixXd ngh_forward(const MatrixXd& hidden, std::span<const Token> tokens, const NghWeights& weights, int n,
                     int shift = 1);

MatrixXd rms_norm(const MatrixXd& x, const VectorXd& gain, double eps = kRmsNormEps);

/// x + NGH(norm1(x)), then + MLP(norm2(.)) with a SiLU d -> d -> d MLP.
MatrixXd ngram_block_forward(const MatrixXd& hidden, std::span<const Token> tokens, const BlockWeights& weights, int n);

/// One-hot embeddings through a residual stack of NGH layers and a linear
/// softmax readout.
struct StackedNgh {
  int width = 0;
  std::vector<int> orders;
  std::vector<NghWeights> layers;
  MatrixXd readout;  // vocab x width
  VectorXd readout_bias;

  /// Fixed weights: state width 2 * vocab. The first half carries the current
  /// token's one-hot; layer k copies the token half of its attention output,
  /// scaled by its order, into the second half, and the readout exposes the
  /// second half. Logits are therefore a weighted sum of the match statistics
  /// of every order.
  static StackedNgh demo(const std::vector<int>& orders, double readout_scale = 2.0);
};

/// Row j conditions on tokens [0, j): it is the readout at position j - 1, and
/// row 0 is the readout bias alone.
PredictionTrace stacked_ngh_predict(const ProblemInstance& instance, const StackedNgh& model);

nlohmann::json mask_to_json(const NgramMask& mask);

}  // namespace icll::nghead
