#pragma once

#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "icll/dataset.hpp"
#include "icll/metrics.hpp"
#include "icll/rng.hpp"

namespace icll::hmm {

/// Row-major dense matrix with the small API the HMM code needs.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int r, int c) { return data_[idx(r, c)]; }
  double operator()(int r, int c) const { return data_[idx(r, c)]; }
  std::span<double> row(int r) { return {data_.data() + idx(r, 0), static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(int r) const { return {data_.data() + idx(r, 0), static_cast<std::size_t>(cols_)}; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t idx(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }
  int rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

struct Masks {
  std::vector<std::vector<bool>> transition;  // NS x NS
  std::vector<bool> pi;                       // NS

  static Masks all_allowed(int ns);
};

struct Hmm {
  Matrix A;  // NS x NS transitions
  Matrix B;  // NS x vocab emissions
  std::vector<double> pi;
  Masks masks;

  int num_states() const { return A.rows(); }
  int vocab() const { return B.cols(); }

  /// Zeroes masked entries and renormalizes each row that keeps any mass.
  void apply_masks();
};

/// Flat index of ordered pairs (i, j) of base states: i * n + j.
class PairStateIndex {
 public:
  explicit PairStateIndex(int base_states);
  int base_states() const { return n_; }
  int num_states() const { return n_ * n_; }
  int flat(int i, int j) const { return i * n_ + j; }
  std::pair<int, int> pair(int flat) const { return {flat / n_, flat % n_}; }

 private:
  int n_;
};

/// Pair-chaining transitions (i,j)->(j,m) with no self-transitions on either
/// side, and initial states restricted to pairs leaving base state 0.
Masks build_masks(const PairStateIndex& index);

struct ZeroLikelihood : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AllObservationsZeroLikelihood : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Scaled forward/backward variables: alpha(t, .) sums to one at every t,
/// scale[t] is the normalizer that produced it, and beta is scaled by the same
/// factors so alpha(t,l) * beta(t,l) is the state posterior.
struct ForwardBackward {
  Matrix alpha;
  Matrix beta;
  std::vector<double> scale;
  double log_likelihood = 0.0;

  std::vector<double> posterior(int t) const;
};

inline constexpr double kUnderflowGuard = 1e-300;

ForwardBackward forward_backward(const Hmm& hmm, std::span<const Token> observation);

/// Forward pass only; returns the normalized filtering distribution after the
/// last symbol and accumulates the log-likelihood.
std::vector<double> forward_filter(const Hmm& hmm, std::span<const Token> observation, double* log_likelihood = nullptr);

double log_likelihood(const Hmm& hmm, std::span<const Token> observation);

struct FitOptions {
  int max_iters = 10;
  /// Stop once an iteration improves the total log-likelihood by less than this.
  double tolerance = 1e-4;
  int max_restarts = 5;
};

struct FitResult {
  Hmm hmm;
  /// Total log-likelihood of the observations under the parameters entering
  /// each E-step.
  std::vector<double> log_likelihoods;
  int restarts = 0;
};

/// Dirichlet(1) rows over the unmasked entries.
Hmm random_hmm(int num_states, int vocab, const Masks& masks, Rng& rng);

/// Baum-Welch EM with masks re-applied every iteration. Observations with zero
/// likelihood under the current parameters are skipped; if all of them are,
/// the initialization is redrawn.
FitResult baum_welch_fit(const std::vector<TokenSeq>& observations, int num_states, int vocab, const Masks& masks,
                         const FitOptions& options, Rng& rng);

/// Distribution over the vocab for the symbol following `partial`. An empty
/// partial string emits from the initial distribution. Falls back to uniform
/// when the partial string has zero likelihood.
std::vector<double> predict_next(const Hmm& hmm, std::span<const Token> partial);

enum class Refit { PerString, EveryPosition };

struct PredictOptions {
  int base_states = 12;  // the fitted HMM has base_states^2 states
  FitOptions fit;
  Refit refit = Refit::PerString;
  std::uint64_t seed = 0;
};

/// In-context Baum-Welch predictor over one instance. Rows before the first
/// complete string are uniform. Otherwise the delimiter receives the uniform
/// length prior's stop hazard and the HMM's symbol distribution shares the
/// rest.
PredictionTrace predict_instance(const ProblemInstance& instance, const PredictOptions& options,
                                 const GenerationParams& params = {});

nlohmann::json to_json(const Hmm& hmm);

}  // namespace icll::hmm
