#include "icll/nghead.hpp"

#include <cmath>
#include <string>

namespace icll::nghead {

NgramMask build_mask(std::span<const Token> tokens, int n, int shift) {
  if (n < 1) throw std::invalid_argument("build_mask: n must be at least 1");
  if (shift < 0) throw std::invalid_argument("build_mask: shift must be non-negative");
  const int L = static_cast<int>(tokens.size());
  NgramMask mask{n, shift, MatrixXd::Zero(L, L), std::vector<int>(static_cast<std::size_t>(L), 0)};
  auto tok = [&](int i) { return tokens[static_cast<std::size_t>(i)]; };
  for (int i = 0; i < L; ++i) {
    int count = 0;
    for (int j = 0; j < i; ++j) {
      const int end = j - shift;
      if (end - (n - 1) < 0) continue;
      bool match = true;
      for (int k = 0; k < n && match; ++k) match = tok(i - k) == tok(end - k);
      if (match) {
        mask.rows(i, j) = 1.0;
        ++count;
      }
    }
    mask.matches[static_cast<std::size_t>(i)] = count;
    if (count > 0) mask.rows.row(i) /= count;
  }
  return mask;
}

NghWeights NghWeights::zeros(int d) {
  return {MatrixXd::Zero(d, d), MatrixXd::Zero(d, d), VectorXd::Zero(d), VectorXd::Zero(d)};
}

BlockWeights BlockWeights::zeros(int d) {
  return {NghWeights::zeros(d), VectorXd::Zero(d), VectorXd::Zero(d), MatrixXd::Zero(d, d),
          MatrixXd::Zero(d, d), VectorXd::Zero(d), VectorXd::Zero(d)};
}

std::size_t BlockWeights::parameter_count(int d) {
  const auto dd = static_cast<std::size_t>(d);
  return 4 * dd * dd + 4 * dd + 2 * dd;
}

namespace {

void check_square(const MatrixXd& m, int d, const char* what) {
  if (m.rows() != d || m.cols() != d) throw ShapeMismatch(std::string(what) + " must be " + std::to_string(d) + "x" + std::to_string(d));
}
void check_vector(const VectorXd& v, int d, const char* what) {
  if (v.size() != d) throw ShapeMismatch(std::string(what) + " must have " + std::to_string(d) + " entries");
}

void check_weights(const NghWeights& w, int d) {
  check_square(w.W1, d, "W1");
  check_square(w.W2, d, "W2");
  check_vector(w.b1, d, "b1");
  check_vector(w.b2, d, "b2");
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

}  // namespace

MatrixXd ngh_forward(const MatrixXd& hidden, std::span<const Token> tokens, const NghWeights& weights, int n,
                     int shift) {
  const int L = static_cast<int>(hidden.rows());
  const int d = static_cast<int>(hidden.cols());
  if (static_cast<std::size_t>(L) != tokens.size())
    throw ShapeMismatch("ngh_forward: " + std::to_string(L) + " hidden rows for " + std::to_string(tokens.size()) + " tokens");
  check_weights(weights, d);

  const NgramMask mask = build_mask(tokens, n, shift);
  // Sum the matched rows and divide once by the match count.
  MatrixXd attended = MatrixXd::Zero(L, d);
  for (int i = 0; i < L; ++i) {
    const int count = mask.matches[static_cast<std::size_t>(i)];
    if (count == 0) continue;
    for (int j = 0; j < i; ++j)
      if (mask.rows(i, j) > 0.0) attended.row(i) += hidden.row(j);
    attended.row(i) /= count;
  }
  MatrixXd out = hidden * weights.W1.transpose() + attended * weights.W2.transpose();
  out.rowwise() += (weights.b1 + weights.b2).transpose();
  return out;
}

MatrixXd rms_norm(const MatrixXd& x, const VectorXd& gain, double eps) {
  check_vector(gain, static_cast<int>(x.cols()), "norm gain");
  MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const double ms = x.row(t).squaredNorm() / static_cast<double>(x.cols());
    out.row(t) = x.row(t).cwiseProduct(gain.transpose()) / std::sqrt(ms + eps);
  }
  return out;
}

MatrixXd ngram_block_forward(const MatrixXd& hidden, std::span<const Token> tokens, const BlockWeights& weights, int n) {
  const int d = static_cast<int>(hidden.cols());
  check_square(weights.mlp_in, d, "mlp_in");
  check_square(weights.mlp_out, d, "mlp_out");
  check_vector(weights.mlp_in_bias, d, "mlp_in_bias");
  check_vector(weights.mlp_out_bias, d, "mlp_out_bias");

  MatrixXd x = hidden + ngh_forward(rms_norm(hidden, weights.norm1), tokens, weights.ngh, n, 1);
  MatrixXd u = rms_norm(x, weights.norm2) * weights.mlp_in.transpose();
  u.rowwise() += weights.mlp_in_bias.transpose();
  u = u.unaryExpr(&silu);
  MatrixXd v = u * weights.mlp_out.transpose();
  v.rowwise() += weights.mlp_out_bias.transpose();
  return x + v;
}

StackedNgh StackedNgh::demo(const std::vector<int>& orders, double readout_scale) {
  const int d = 2 * kVocabSize;
  StackedNgh model;
  model.width = d;
  model.orders = orders;
  for (int n : orders) {
    NghWeights w = NghWeights::zeros(d);
    for (int v = 0; v < kVocabSize; ++v) w.W2(kVocabSize + v, v) = static_cast<double>(n);
    model.layers.push_back(std::move(w));
  }
  model.readout = MatrixXd::Zero(kVocabSize, d);
  for (int v = 0; v < kVocabSize; ++v) model.readout(v, kVocabSize + v) = readout_scale;
  model.readout_bias = VectorXd::Zero(kVocabSize);
  return model;
}

PredictionTrace stacked_ngh_predict(const ProblemInstance& instance, const StackedNgh& model) {
  if (model.layers.size() != model.orders.size()) throw ShapeMismatch("stacked_ngh_predict: one weight set per order");
  if (model.readout.rows() != kVocabSize || model.readout.cols() != model.width)
    throw ShapeMismatch("stacked_ngh_predict: readout must be vocab x width");
  check_vector(model.readout_bias, kVocabSize, "readout_bias");
  if (model.width < kVocabSize) throw ShapeMismatch("stacked_ngh_predict: width smaller than the vocabulary");

  const auto& tokens = instance.tokens;
  const int L = static_cast<int>(tokens.size());
  MatrixXd h = MatrixXd::Zero(L, model.width);
  for (int t = 0; t < L; ++t) h(t, tokens[static_cast<std::size_t>(t)]) = 1.0;
  for (std::size_t k = 0; k < model.layers.size(); ++k)
    h += ngh_forward(h, tokens, model.layers[k], model.orders[k], 1);

  auto softmax = [](const VectorXd& logits) {
    Distribution p{};
    const double mx = logits.maxCoeff();
    double total = 0.0;
    for (int v = 0; v < kVocabSize; ++v) total += (p[static_cast<std::size_t>(v)] = std::exp(logits(v) - mx));
    for (double& x : p) x /= total;
    return p;
  };

  PredictionTrace trace{instance.id, {}};
  trace.probs.reserve(static_cast<std::size_t>(L));
  if (L > 0) trace.probs.push_back(softmax(model.readout_bias));
  for (int t = 0; t + 1 < L; ++t) {
    const VectorXd logits = model.readout * h.row(t).transpose() + model.readout_bias;
    trace.probs.push_back(softmax(logits));
  }
  return trace;
}

nlohmann::json mask_to_json(const NgramMask& mask) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < mask.length(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(mask.length()));
    for (int j = 0; j < mask.length(); ++j) r[static_cast<std::size_t>(j)] = mask.rows(i, j);
    rows.push_back(std::move(r));
  }
  return {{"n", mask.n}, {"shift", mask.shift}, {"rows", std::move(rows)}};
}

}  // namespace icll::nghead
