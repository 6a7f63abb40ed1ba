#include "icll/hmm.hpp"

#include <cmath>
#include <numeric>

namespace icll::hmm {

Masks Masks::all_allowed(int ns) {
  return {std::vector<std::vector<bool>>(static_cast<std::size_t>(ns), std::vector<bool>(static_cast<std::size_t>(ns), true)),
          std::vector<bool>(static_cast<std::size_t>(ns), true)};
}

namespace {

void normalize_row(std::span<double> row) {
  double s = 0.0;
  for (double v : row) s += v;
  if (s <= 0.0) return;
  for (double& v : row) v /= s;
}

// Successor lists of the unmasked transition graph.
std::vector<std::vector<int>> successors(const Masks& masks) {
  std::vector<std::vector<int>> succ(masks.transition.size());
  for (std::size_t l = 0; l < masks.transition.size(); ++l)
    for (std::size_t m = 0; m < masks.transition[l].size(); ++m)
      if (masks.transition[l][m]) succ[l].push_back(static_cast<int>(m));
  return succ;
}

void check_observation(const Hmm& hmm, std::span<const Token> obs) {
  if (obs.empty()) throw std::invalid_argument("hmm: empty observation");
  for (Token o : obs)
    if (o < 0 || o >= hmm.vocab()) throw std::invalid_argument("hmm: observation symbol out of range");
}

}  // namespace

void Hmm::apply_masks() {
  const int ns = num_states();
  for (int l = 0; l < ns; ++l) {
    for (int m = 0; m < ns; ++m)
      if (!masks.transition[static_cast<std::size_t>(l)][static_cast<std::size_t>(m)]) A(l, m) = 0.0;
    normalize_row(A.row(l));
    normalize_row(B.row(l));
    if (!masks.pi[static_cast<std::size_t>(l)]) pi[static_cast<std::size_t>(l)] = 0.0;
  }
  normalize_row(pi);
}

PairStateIndex::PairStateIndex(int base_states) : n_(base_states) {
  if (base_states < 1) throw std::invalid_argument("PairStateIndex: need at least one base state");
}

Masks build_masks(const PairStateIndex& index) {
  const int ns = index.num_states();
  Masks masks{std::vector<std::vector<bool>>(static_cast<std::size_t>(ns), std::vector<bool>(static_cast<std::size_t>(ns), false)),
              std::vector<bool>(static_cast<std::size_t>(ns), false)};
  for (int a = 0; a < ns; ++a) {
    const auto [i, j] = index.pair(a);
    masks.pi[static_cast<std::size_t>(a)] = (i == 0);
    for (int b = 0; b < ns; ++b) {
      const auto [l, m] = index.pair(b);
      masks.transition[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = (j == l) && (i != j) && (l != m);
    }
  }
  return masks;
}

std::vector<double> ForwardBackward::posterior(int t) const {
  std::vector<double> g(static_cast<std::size_t>(alpha.cols()));
  for (int l = 0; l < alpha.cols(); ++l) g[static_cast<std::size_t>(l)] = alpha(t, l) * beta(t, l);
  normalize_row(g);
  return g;
}

ForwardBackward forward_backward(const Hmm& hmm, std::span<const Token> obs) {
  check_observation(hmm, obs);
  const int ns = hmm.num_states();
  const int T = static_cast<int>(obs.size());
  const auto succ = successors(hmm.masks);
  ForwardBackward fb{Matrix(T, ns), Matrix(T, ns), std::vector<double>(static_cast<std::size_t>(T)), 0.0};

  for (int t = 0; t < T; ++t) {
    auto a = fb.alpha.row(t);
    if (t == 0) {
      for (int l = 0; l < ns; ++l) a[static_cast<std::size_t>(l)] = hmm.pi[static_cast<std::size_t>(l)];
    } else {
      const auto prev = fb.alpha.row(t - 1);
      for (int l = 0; l < ns; ++l) {
        const double p = prev[static_cast<std::size_t>(l)];
        if (p == 0.0) continue;
        for (int m : succ[static_cast<std::size_t>(l)]) a[static_cast<std::size_t>(m)] += p * hmm.A(l, m);
      }
    }
    double c = 0.0;
    for (int m = 0; m < ns; ++m) {
      a[static_cast<std::size_t>(m)] *= hmm.B(m, obs[static_cast<std::size_t>(t)]);
      c += a[static_cast<std::size_t>(m)];
    }
    if (!(c > kUnderflowGuard)) throw ZeroLikelihood("observation has zero likelihood at step " + std::to_string(t));
    for (double& v : a) v /= c;
    fb.scale[static_cast<std::size_t>(t)] = c;
    fb.log_likelihood += std::log(c);
  }

  for (int l = 0; l < ns; ++l) fb.beta(T - 1, l) = 1.0;
  for (int t = T - 2; t >= 0; --t) {
    const Token next = obs[static_cast<std::size_t>(t) + 1];
    const double c = fb.scale[static_cast<std::size_t>(t) + 1];
    for (int l = 0; l < ns; ++l) {
      double s = 0.0;
      for (int m : succ[static_cast<std::size_t>(l)]) s += hmm.A(l, m) * hmm.B(m, next) * fb.beta(t + 1, m);
      fb.beta(t, l) = s / c;
    }
  }
  return fb;
}

std::vector<double> forward_filter(const Hmm& hmm, std::span<const Token> obs, double* log_likelihood) {
  check_observation(hmm, obs);
  const int ns = hmm.num_states();
  const auto succ = successors(hmm.masks);
  std::vector<double> a(hmm.pi), next(static_cast<std::size_t>(ns));
  double ll = 0.0;
  for (std::size_t t = 0; t < obs.size(); ++t) {
    if (t > 0) {
      std::fill(next.begin(), next.end(), 0.0);
      for (int l = 0; l < ns; ++l) {
        const double p = a[static_cast<std::size_t>(l)];
        if (p == 0.0) continue;
        for (int m : succ[static_cast<std::size_t>(l)]) next[static_cast<std::size_t>(m)] += p * hmm.A(l, m);
      }
      a.swap(next);
    }
    double c = 0.0;
    for (int m = 0; m < ns; ++m) {
      a[static_cast<std::size_t>(m)] *= hmm.B(m, obs[t]);
      c += a[static_cast<std::size_t>(m)];
    }
    if (!(c > kUnderflowGuard)) throw ZeroLikelihood("observation has zero likelihood at step " + std::to_string(t));
    for (double& v : a) v /= c;
    ll += std::log(c);
  }
  if (log_likelihood) *log_likelihood = ll;
  return a;
}

double log_likelihood(const Hmm& hmm, std::span<const Token> obs) {
  double ll = 0.0;
  forward_filter(hmm, obs, &ll);
  return ll;
}

Hmm random_hmm(int num_states, int vocab, const Masks& masks, Rng& rng) {
  if (num_states < 1 || vocab < 1) throw std::invalid_argument("random_hmm: empty model");
  if (static_cast<int>(masks.pi.size()) != num_states || static_cast<int>(masks.transition.size()) != num_states)
    throw std::invalid_argument("random_hmm: mask shape does not match the state count");
  Hmm h{Matrix(num_states, num_states), Matrix(num_states, vocab), std::vector<double>(static_cast<std::size_t>(num_states)), masks};
  for (int l = 0; l < num_states; ++l) {
    for (int m = 0; m < num_states; ++m)
      if (masks.transition[static_cast<std::size_t>(l)][static_cast<std::size_t>(m)]) h.A(l, m) = rng.exponential();
    for (int k = 0; k < vocab; ++k) h.B(l, k) = rng.exponential();
    if (masks.pi[static_cast<std::size_t>(l)]) h.pi[static_cast<std::size_t>(l)] = rng.exponential();
  }
  h.apply_masks();
  return h;
}

FitResult baum_welch_fit(const std::vector<TokenSeq>& observations, int num_states, int vocab, const Masks& masks,
                         const FitOptions& options, Rng& rng) {
  if (observations.empty()) throw std::invalid_argument("baum_welch_fit: no observations");
  if (num_states < 1) throw std::invalid_argument("baum_welch_fit: need at least one state");
  const int ns = num_states;
  const auto succ = successors(masks);

  for (int restart = 0; restart <= options.max_restarts; ++restart) {
    Rng init_rng = rng.child("restart", static_cast<std::uint64_t>(restart));
    FitResult result{random_hmm(ns, vocab, masks, init_rng), {}, restart};
    Hmm& h = result.hmm;
    bool dead_start = false;

    for (int iter = 0; iter < options.max_iters; ++iter) {
      h.apply_masks();
      Matrix xi(ns, ns), emis(ns, vocab);
      std::vector<double> pi_acc(static_cast<std::size_t>(ns), 0.0);
      double total_ll = 0.0;
      int used = 0;

      for (const auto& obs : observations) {
        ForwardBackward fb;
        try {
          fb = forward_backward(h, obs);
        } catch (const ZeroLikelihood&) {
          continue;
        }
        ++used;
        total_ll += fb.log_likelihood;
        const int T = static_cast<int>(obs.size());
        for (int t = 0; t < T; ++t) {
          const std::vector<double> g = fb.posterior(t);
          const Token o = obs[static_cast<std::size_t>(t)];
          for (int l = 0; l < ns; ++l) emis(l, o) += g[static_cast<std::size_t>(l)];
          if (t == 0)
            for (int l = 0; l < ns; ++l) pi_acc[static_cast<std::size_t>(l)] += g[static_cast<std::size_t>(l)];
          if (t + 1 < T) {
            const Token next = obs[static_cast<std::size_t>(t) + 1];
            const double c = fb.scale[static_cast<std::size_t>(t) + 1];
            for (int l = 0; l < ns; ++l) {
              const double a = fb.alpha(t, l);
              if (a == 0.0) continue;
              for (int m : succ[static_cast<std::size_t>(l)])
                xi(l, m) += a * h.A(l, m) * h.B(m, next) * fb.beta(t + 1, m) / c;
            }
          }
        }
      }

      if (used == 0) {
        if (iter == 0) {
          dead_start = true;
          break;
        }
        throw AllObservationsZeroLikelihood("all observations lost their likelihood during EM");
      }
      if (iter > 0 && total_ll - result.log_likelihoods.back() < options.tolerance) {
        result.log_likelihoods.push_back(total_ll);
        return result;
      }
      result.log_likelihoods.push_back(total_ll);

      // M-step. Rows without expected visits keep their previous values.
      for (int l = 0; l < ns; ++l) {
        double row_total = 0.0;
        for (int m = 0; m < ns; ++m) row_total += xi(l, m);
        if (row_total > 0.0)
          for (int m = 0; m < ns; ++m) h.A(l, m) = xi(l, m) / row_total;
        double emit_total = 0.0;
        for (int k = 0; k < vocab; ++k) emit_total += emis(l, k);
        if (emit_total > 0.0)
          for (int k = 0; k < vocab; ++k) h.B(l, k) = emis(l, k) / emit_total;
        h.pi[static_cast<std::size_t>(l)] = pi_acc[static_cast<std::size_t>(l)] / used;
      }
      h.apply_masks();
    }
    if (!dead_start) return result;
  }
  throw AllObservationsZeroLikelihood("every observation has zero likelihood after " +
                                      std::to_string(options.max_restarts + 1) + " initializations");
}

std::vector<double> predict_next(const Hmm& hmm, std::span<const Token> partial) {
  const int ns = hmm.num_states();
  const int vocab = hmm.vocab();
  std::vector<double> uniform(static_cast<std::size_t>(vocab), 1.0 / vocab);
  std::vector<double> state(hmm.pi);
  if (!partial.empty()) {
    std::vector<double> filtered;
    try {
      filtered = forward_filter(hmm, partial);
    } catch (const ZeroLikelihood&) {
      return uniform;
    }
    std::fill(state.begin(), state.end(), 0.0);
    for (int l = 0; l < ns; ++l)
      for (int m = 0; m < ns; ++m) state[static_cast<std::size_t>(m)] += filtered[static_cast<std::size_t>(l)] * hmm.A(l, m);
  }
  std::vector<double> p(static_cast<std::size_t>(vocab), 0.0);
  for (int m = 0; m < ns; ++m) {
    const double q = state[static_cast<std::size_t>(m)];
    if (q == 0.0) continue;
    for (int k = 0; k < vocab; ++k) p[static_cast<std::size_t>(k)] += q * hmm.B(m, k);
  }
  double total = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(total > kUnderflowGuard)) return uniform;
  for (double& v : p) v /= total;
  return p;
}

PredictionTrace predict_instance(const ProblemInstance& instance, const PredictOptions& options,
                                 const GenerationParams& params) {
  const PairStateIndex index(options.base_states);
  const Masks masks = build_masks(index);
  const Rng instance_rng = Rng(options.seed).child("bw", static_cast<std::uint64_t>(instance.id));

  PredictionTrace trace{instance.id, {}};
  trace.probs.reserve(instance.tokens.size());
  std::vector<TokenSeq> completed;
  TokenSeq partial;
  Hmm fitted;
  std::size_t fitted_for = 0;  // number of completed strings behind `fitted`

  auto fit = [&](std::vector<TokenSeq> observations) {
    Rng rng = instance_rng.child(static_cast<std::uint64_t>(completed.size()) * 64 + partial.size());
    return baum_welch_fit(observations, index.num_states(), kGlobalSymbols, masks, options.fit, rng).hmm;
  };

  for (Token t : instance.tokens) {
    if (completed.empty()) {
      trace.probs.push_back(uniform_distribution());
    } else {
      const Hmm* model = &fitted;
      Hmm literal;
      if (options.refit == Refit::EveryPosition) {
        std::vector<TokenSeq> observations = completed;
        if (!partial.empty()) observations.push_back(partial);
        literal = fit(std::move(observations));
        model = &literal;
      } else if (fitted_for != completed.size()) {
        fitted = fit(completed);
        fitted_for = completed.size();
      }
      const std::vector<double> symbols = predict_next(*model, partial);
      const double stop = stop_hazard(static_cast<int>(partial.size()), params);
      Distribution row{};
      for (int x = 0; x < kGlobalSymbols; ++x) row[static_cast<std::size_t>(x)] = symbols[static_cast<std::size_t>(x)] * (1.0 - stop);
      row[kDelimiter] = stop;
      trace.probs.push_back(row);
    }
    if (t == kDelimiter) {
      if (!partial.empty()) completed.push_back(partial);
      partial.clear();
    } else {
      partial.push_back(t);
    }
  }
  return trace;
}

nlohmann::json to_json(const Hmm& hmm) {
  auto rows = [](const Matrix& m) {
    nlohmann::json out = nlohmann::json::array();
    for (int r = 0; r < m.rows(); ++r) out.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return out;
  };
  return {{"A", rows(hmm.A)}, {"B", rows(hmm.B)}, {"pi", hmm.pi}};
}

}  // namespace icll::hmm
