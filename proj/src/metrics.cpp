#include "icll/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "icll/dataset.hpp"

namespace icll {

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x))
    carry_ += (sum_ - t) + x;
  else
    carry_ += (x - t) + sum_;
  sum_ = t;
}

double total_variation(const Distribution& p, const Distribution& q) {
  double s = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) s += std::abs(p[x] - q[x]);
  return 0.5 * s;
}

Token argmax(const Distribution& p) {
  std::size_t best = 0;
  for (std::size_t x = 1; x < p.size(); ++x)
    if (p[x] > p[best]) best = x;
  return static_cast<Token>(best);
}

PredictionTrace oracle_trace(const ProblemInstance& instance, const GenerationParams& params) {
  PredictionTrace trace{instance.id, {}};
  trace.probs.reserve(instance.tokens.size());
  const std::span<const Token> tokens(instance.tokens);
  std::size_t string_start = 0;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    trace.probs.push_back(ground_truth_distribution(instance.pfa, tokens.subspan(string_start, j - string_start), params));
    if (tokens[j] == kDelimiter) string_start = j + 1;
  }
  return trace;
}

PredictionTrace uniform_trace(const ProblemInstance& instance) {
  return {instance.id, std::vector<Distribution>(instance.tokens.size(), uniform_distribution())};
}

void check_alignment(const std::vector<PredictionTrace>& traces, const std::vector<ProblemInstance>& instances) {
  if (traces.size() != instances.size())
    throw Misalignment(std::to_string(traces.size()) + " traces for " + std::to_string(instances.size()) + " instances");
  for (std::size_t k = 0; k < traces.size(); ++k) {
    if (traces[k].instance_id != instances[k].id)
      throw Misalignment("trace " + std::to_string(k) + " has id " + std::to_string(traces[k].instance_id) +
                         ", expected instance id " + std::to_string(instances[k].id));
    if (traces[k].probs.size() != instances[k].tokens.size())
      throw Misalignment("trace for instance " + std::to_string(instances[k].id) + " has " +
                         std::to_string(traces[k].probs.size()) + " rows for " +
                         std::to_string(instances[k].tokens.size()) + " tokens");
  }
}

EvalReport evaluate(const std::string& model, const std::vector<PredictionTrace>& traces,
                    const std::vector<ProblemInstance>& instances, const GenerationParams& params) {
  check_alignment(traces, instances);
  EvalReport report;
  report.model = model;
  CompensatedSum correct_total, tvd_total;
  for (std::size_t k = 0; k < traces.size(); ++k) {
    const PredictionTrace gt = oracle_trace(instances[k], params);
    CompensatedSum tvd;
    std::int64_t correct = 0;
    for (std::size_t j = 0; j < gt.probs.size(); ++j) {
      const Distribution& p = traces[k].probs[j];
      if (gt.probs[j][static_cast<std::size_t>(argmax(p))] > 0.0) ++correct;
      tvd.add(total_variation(p, gt.probs[j]));
    }
    const auto nt = static_cast<std::int64_t>(gt.probs.size());
    InstanceScore score{instances[k].id, 0.0, 0.0, nt};
    if (nt > 0) {
      score.accuracy = static_cast<double>(correct) / static_cast<double>(nt);
      score.mean_tvd = tvd.value() / static_cast<double>(nt);
    }
    report.per_instance.push_back(score);
    correct_total.add(static_cast<double>(correct));
    tvd_total.add(tvd.value());
    report.nt += nt;
  }
  if (report.nt > 0) {
    report.accuracy = correct_total.value() / static_cast<double>(report.nt);
    report.mean_tvd = tvd_total.value() / static_cast<double>(report.nt);
  }
  return report;
}

double accuracy(const std::vector<PredictionTrace>& traces, const std::vector<ProblemInstance>& instances,
                const GenerationParams& params) {
  return evaluate("", traces, instances, params).accuracy;
}

double tvd_to_ground_truth(const std::vector<PredictionTrace>& traces, const std::vector<ProblemInstance>& instances,
                           const GenerationParams& params) {
  return evaluate("", traces, instances, params).mean_tvd;
}

double random_guess_accuracy(const std::vector<ProblemInstance>& instances, const GenerationParams& params) {
  CompensatedSum total;
  std::int64_t nt = 0;
  for (const auto& inst : instances) {
    for (const auto& row : oracle_trace(inst, params).probs) {
      int valid = 0;
      for (double p : row) valid += p > 0.0 ? 1 : 0;
      total.add(static_cast<double>(valid) / kVocabSize);
      ++nt;
    }
  }
  return nt > 0 ? total.value() / static_cast<double>(nt) : 0.0;
}

PairwiseMatrix pairwise_tvd(const std::map<std::string, std::vector<PredictionTrace>>& traces_by_model,
                            std::size_t horizon) {
  PairwiseMatrix out;
  std::vector<const std::vector<PredictionTrace>*> sets;
  for (const auto& [name, traces] : traces_by_model) {
    out.models.push_back(name);
    sets.push_back(&traces);
  }
  const std::size_t m = sets.size();
  out.values.assign(m, std::vector<double>(m, 0.0));
  if (m == 0) return out;

  const auto& ref = *sets.front();
  for (std::size_t a = 1; a < m; ++a) {
    const auto& other = *sets[a];
    if (other.size() != ref.size())
      throw Misalignment("model " + out.models[a] + " has " + std::to_string(other.size()) + " traces, model " +
                         out.models[0] + " has " + std::to_string(ref.size()));
    for (std::size_t k = 0; k < ref.size(); ++k)
      if (other[k].instance_id != ref[k].instance_id || other[k].probs.size() != ref[k].probs.size())
        throw Misalignment("model " + out.models[a] + " disagrees with " + out.models[0] + " on instance " +
                           std::to_string(ref[k].instance_id));
  }

  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b) {
      CompensatedSum sum;
      std::int64_t count = 0;
      for (std::size_t k = 0; k < ref.size(); ++k) {
        const auto& pa = (*sets[a])[k].probs;
        const auto& pb = (*sets[b])[k].probs;
        const std::size_t limit = std::min(horizon, pa.size());
        for (std::size_t j = 0; j < limit; ++j) sum.add(total_variation(pa[j], pb[j]));
        count += static_cast<std::int64_t>(limit);
      }
      const double v = count > 0 ? sum.value() / static_cast<double>(count) : 0.0;
      out.values[a][b] = out.values[b][a] = v;
    }
  return out;
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& s : r.per_instance)
    per.push_back({{"id", s.id}, {"accuracy", s.accuracy}, {"mean_tvd", s.mean_tvd}, {"nt", s.nt}});
  return {{"model", r.model}, {"accuracy", r.accuracy}, {"mean_tvd", r.mean_tvd}, {"nt", r.nt}, {"per_instance", std::move(per)}};
}

std::string pairwise_to_csv(const PairwiseMatrix& matrix) {
  std::ostringstream out;
  out << "model";
  for (const auto& name : matrix.models) out << ',' << name;
  out << '\n';
  char buf[32];
  for (std::size_t a = 0; a < matrix.models.size(); ++a) {
    out << matrix.models[a];
    for (double v : matrix.values[a]) {
      std::snprintf(buf, sizeof buf, "%.10f", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace icll
