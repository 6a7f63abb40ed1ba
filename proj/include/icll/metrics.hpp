#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "icll/automata.hpp"
#include "icll/vocab.hpp"

namespace icll {

struct ProblemInstance;

/// Next-token distributions of one predictor over one instance; row j
/// conditions on tokens[0, j) and predicts tokens[j].
struct PredictionTrace {
  std::int64_t instance_id = 0;
  std::vector<Distribution> probs;

  bool operator==(const PredictionTrace&) const = default;
};

struct Misalignment : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InstanceScore {
  std::int64_t id = 0;
  double accuracy = 0.0;
  double mean_tvd = 0.0;
  std::int64_t nt = 0;
};

struct EvalReport {
  std::string model;
  double accuracy = 0.0;
  double mean_tvd = 0.0;
  std::int64_t nt = 0;
  std::vector<InstanceScore> per_instance;
};

/// Half the L1 distance.
double total_variation(const Distribution& p, const Distribution& q);

/// Lowest id among the maximal entries.
Token argmax(const Distribution& p);

/// The ground-truth predictor: language distribution at every position.
PredictionTrace oracle_trace(const ProblemInstance& instance, const GenerationParams& params = {});

/// Predicts 1/19 everywhere.
PredictionTrace uniform_trace(const ProblemInstance& instance);

/// Throws Misalignment unless traces[k] belongs to instances[k] and has one row
/// per token.
void check_alignment(const std::vector<PredictionTrace>& traces, const std::vector<ProblemInstance>& instances);

double accuracy(const std::vector<PredictionTrace>& traces, const std::vector<ProblemInstance>& instances,
                const GenerationParams& params = {});

double tvd_to_ground_truth(const std::vector<PredictionTrace>& traces, const std::vector<ProblemInstance>& instances,
                           const GenerationParams& params = {});

/// Both metrics in one pass, with per-instance breakdowns.
EvalReport evaluate(const std::string& model, const std::vector<PredictionTrace>& traces,
                    const std::vector<ProblemInstance>& instances, const GenerationParams& params = {});

/// Expected accuracy of guessing uniformly at random: mean |valid|/19.
double random_guess_accuracy(const std::vector<ProblemInstance>& instances, const GenerationParams& params = {});

struct PairwiseMatrix {
  std::vector<std::string> models;
  std::vector<std::vector<double>> values;
};

/// Mean TVD between every pair of models over the first `horizon` positions of
/// each instance.
PairwiseMatrix pairwise_tvd(const std::map<std::string, std::vector<PredictionTrace>>& traces_by_model,
                            std::size_t horizon = 100);

nlohmann::json report_to_json(const EvalReport& report);
std::string pairwise_to_csv(const PairwiseMatrix& matrix);

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

}  // namespace icll
