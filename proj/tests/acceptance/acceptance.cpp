// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "icll/automata.hpp"
#include "icll/dataset.hpp"
#include "icll/hmm.hpp"
#include "icll/metrics.hpp"
#include "icll/ngram.hpp"
#include "icll/nghead.hpp"
#include "icll/reweight.hpp"
#include "oracles/hmm_enumeration.hpp"
#include "oracles/myhill_nerode.hpp"
#include "oracles/ngh_reference.hpp"
#include "oracles/ngram_naive.hpp"

#ifndef ICLL_CLI_PATH
#error "ICLL_CLI_PATH must name the icll binary"
#endif

using namespace icll;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

// ---- tolerances and budgets ----
constexpr double kMeanLength = 382.0, kMeanLengthTol = 15.0;
constexpr double kDatasetSeconds = 30.0;
constexpr double kMinimizeSeconds = 10.0;
constexpr double kSumTol = 1e-9;
constexpr double kEscapeTol = 1e-9;
constexpr double kHmmRelTol = 1e-9;
constexpr double kEmTol = 1e-8;
constexpr double kBlockTol = 1e-6;
constexpr double kGradTol = 1e-4;
constexpr double kFullTrainSeconds = 2.0 * 3600.0;
constexpr double kSmokeTrainSeconds = 5.0 * 60.0;
constexpr int kSmokeEpochs = 2;

// Regression values from the first full run (500 test instances, seed 7007).
constexpr double kFrozenTvd3 = 0.3132737568;
constexpr double kFrozenTvd2 = 0.3693915164;
constexpr double kFrozenTvdUniform = 0.8409131457;
constexpr double kFrozenAcc3 = 0.9075109938;
constexpr double kFrozenTol = 1e-6;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail.clear();
      if (!detail.empty()) detail += "; ";
      detail += what;
      pass = false;
    }
  }
  void note(const std::string& what) {
    if (!pass) return;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1 ----
Outcome dataset_statistics() {
  Outcome o;
  const GenerationParams params;
  const std::uint64_t seed = 1001;
  const auto t0 = Clock::now();
  const Dataset ds = build_dataset(params, 0, 1000, seed);
  const double elapsed = seconds_since(t0);
  const DatasetStats s = compute_stats(ds.test);

  o.require(std::abs(s.mean_symbols - kMeanLength) <= kMeanLengthTol,
            "mean symbols " + fmt("%.2f", s.mean_symbols) + " outside 382 +/- 15");
  o.require(elapsed < kDatasetSeconds, "generation took " + fmt("%.1f", elapsed) + " s");

  bool strings_ok = true;
  for (const auto& inst : ds.test) {
    const auto k = static_cast<int>(inst.strings.size());
    strings_ok &= k >= params.strings_min && k <= params.strings_max;
    for (const auto& str : inst.strings) {
      const auto len = static_cast<int>(str.size());
      strings_ok &= len >= params.len_min && len <= params.len_max;
    }
  }
  o.require(strings_ok, "string count or string length out of range");

  // The automaton streams of the generator, including any rejected duplicates.
  bool automata_ok = true;
  const Rng root(seed);
  for (std::uint64_t attempt = 0; attempt < 1200; ++attempt) {
    Rng rng = root.child("automaton", attempt);
    const SampledAutomaton a = sample_dfa(params, rng);
    const auto c = static_cast<int>(a.alphabet.language_symbols.size());
    automata_ok &= a.num_states_sampled >= params.n_min && a.num_states_sampled <= params.n_max;
    automata_ok &= c >= params.c_min && c <= params.c_max;
    for (int m : a.out_degrees) automata_ok &= m >= params.m_min && m <= params.m_max;
  }
  o.require(automata_ok, "sampled automaton parameter out of range");

  o.note("mean symbols " + fmt("%.2f", s.mean_symbols) + ", mean tokens incl. delimiters " +
         fmt("%.2f", s.mean_tokens) + ", " + fmt("%.1f", elapsed) + " s");
  return o;
}

// ---- 2 ----
Outcome minimization_oracle() {
  Outcome o;
  Rng rng(2002);
  int mismatches = 0;
  const auto t0 = Clock::now();
  for (int rep = 0; rep < 500; ++rep) {
    const Dfa d = oracle::random_dfa(rng, 8, 3);
    const Minimization m = minimize_with_map(d);
    const auto eq = oracle::myhill_nerode(d);
    bool same = m.dfa.num_states() == eq.classes;
    for (int p = 0; p < d.num_states() && same; ++p) {
      same &= (m.class_of[p] != kNoState) == (eq.reachable[p] != 0);
      if (!eq.reachable[p]) continue;
      for (int q = 0; q < d.num_states(); ++q)
        if (eq.reachable[q]) same &= (m.class_of[p] == m.class_of[q]) == eq.equivalent[p][q];
    }
    mismatches += same ? 0 : 1;
  }
  const double elapsed = seconds_since(t0);
  o.require(mismatches == 0, std::to_string(mismatches) + " of 500 partitions differ");
  o.require(elapsed < kMinimizeSeconds, "took " + fmt("%.2f", elapsed) + " s");
  o.note("500/500 partitions identical, " + fmt("%.2f", elapsed) + " s");
  return o;
}

// ---- 3 ----
Outcome oracle_calibration() {
  Outcome o;
  const Dataset ds = build_dataset(GenerationParams{}, 0, 100, 3003);
  std::vector<PredictionTrace> traces;
  for (const auto& inst : ds.test) traces.push_back(oracle_trace(inst, ds.manifest.params));
  const EvalReport r = evaluate("oracle", traces, ds.test, ds.manifest.params);
  o.require(r.accuracy == 1.0, "accuracy " + fmt("%.17g", r.accuracy));
  o.require(r.mean_tvd == 0.0, "mean TVD " + fmt("%.17g", r.mean_tvd));
  o.note("accuracy 1.0, mean TVD 0.0 over " + std::to_string(r.nt) + " positions");
  return o;
}

// ---- 4 ----
TokenSeq random_prefix(Rng& rng, std::size_t max_len, int symbols) {
  const auto len = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(max_len)));
  TokenSeq out;
  for (std::size_t i = 0; i < len; ++i)
    out.push_back(rng.uniform01() < 0.1 ? kDelimiter : static_cast<Token>(rng.uniform_int(0, symbols - 1)));
  return out;
}

void for_each_small_context(int order, int symbols, const std::function<void(const TokenSeq&)>& fn) {
  std::vector<Token> alphabet;
  for (Token t = 0; t < symbols; ++t) alphabet.push_back(t);
  alphabet.push_back(kDelimiter);
  alphabet.push_back(ngram::kPad);
  TokenSeq ctx;
  std::function<void()> rec = [&] {
    fn(ctx);
    if (static_cast<int>(ctx.size()) == order - 1) return;
    for (Token t : alphabet) {
      ctx.push_back(t);
      rec();
      ctx.pop_back();
    }
  };
  rec();
}

Outcome ngram_correctness() {
  Outcome o;
  Rng rng(4004);
  long count_checks = 0, count_errors = 0, rows = 0, sum_errors = 0;
  long escape_checks = 0, escape_errors = 0, escape_saturated = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const int order = static_cast<int>(rng.uniform_int(1, 4));
    // Small alphabets for count coverage, the full one for saturated contexts.
    const int symbols = rep % 4 == 3 ? kGlobalSymbols : static_cast<int>(rng.uniform_int(2, 4));
    const TokenSeq prefix = random_prefix(rng, 500, symbols);
    const ngram::NgramTable t = ngram::build_table(prefix, order);
    const auto corpus = oracle::padded_corpus(prefix, order);

    auto check_counts = [&](const TokenSeq& ctx) {
      ++count_checks;
      if (t.context_total(ctx) != oracle::naive_count(corpus, ctx, -1)) ++count_errors;
      for (Token w = 0; w < kVocabSize; ++w)
        if (t.count(ctx, w) != oracle::naive_count(corpus, ctx, w)) ++count_errors;
    };
    if (symbols <= 4) for_each_small_context(order, symbols, check_counts);
    t.for_each_context([&](const TokenSeq& ctx, const ngram::ContextRow&) { check_counts(ctx); });

    t.for_each_context([&](const TokenSeq& ctx, const ngram::ContextRow& row) {
      if (static_cast<int>(ctx.size()) != order - 1 || row.total == 0) return;
      const Distribution d = ngram::next_token_distribution(t, ctx);
      double total = 0.0, seen = 0.0;
      int unseen = 0;
      for (int w = 0; w < kVocabSize; ++w) {
        total += d[static_cast<std::size_t>(w)];
        if (row.counts[static_cast<std::size_t>(w)] > 0)
          seen += d[static_cast<std::size_t>(w)];
        else
          ++unseen;
      }
      ++rows;
      if (std::abs(total - 1.0) > kSumTol) ++sum_errors;
      if (unseen == 0) {
        ++escape_saturated;  // no unseen id can take the escape mass
        return;
      }
      ++escape_checks;
      if (std::abs(seen - row.total / (row.total + 1.0)) > kEscapeTol) ++escape_errors;
    });

    // Every row the predictor emits along the prefix.
    ProblemInstance inst;
    inst.tokens = prefix;
    for (const Distribution& d : ngram::predict_instance(inst, order).probs) {
      double total = 0.0;
      for (double p : d) total += p;
      ++rows;
      if (std::abs(total - 1.0) > kSumTol) ++sum_errors;
    }
  }
  o.require(count_errors == 0, std::to_string(count_errors) + " count mismatches");
  o.require(sum_errors == 0, std::to_string(sum_errors) + " rows off unit sum");
  o.require(escape_errors == 0, std::to_string(escape_errors) + " escape identity violations");
  o.require(escape_checks > 0, "no context exercised the escape identity");
  o.note(std::to_string(count_checks) + " contexts rescanned, " + std::to_string(rows) + " rows summed, " +
         std::to_string(escape_checks) + " escape identities (" + std::to_string(escape_saturated) +
         " saturated contexts skipped)");
  return o;
}

// ---- 5 ----
hmm::Masks random_masks(Rng& rng, int ns) {
  hmm::Masks m = hmm::Masks::all_allowed(ns);
  for (int l = 0; l < ns; ++l) {
    for (int k = 0; k < ns; ++k) m.transition[l][k] = rng.uniform01() < 0.6;
    m.transition[l][static_cast<std::size_t>(rng.uniform_int(0, ns - 1))] = true;
    m.pi[l] = rng.uniform01() < 0.5;
  }
  m.pi[static_cast<std::size_t>(rng.uniform_int(0, ns - 1))] = true;
  return m;
}

TokenSeq random_observation(Rng& rng, int max_len, int vocab) {
  TokenSeq obs(static_cast<std::size_t>(rng.uniform_int(1, max_len)));
  for (auto& x : obs) x = static_cast<Token>(rng.uniform_int(0, vocab - 1));
  return obs;
}

Outcome hmm_numerics() {
  Outcome o;
  Rng rng(5005);
  double worst_forward = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int ns = static_cast<int>(rng.uniform_int(1, 5));
    const int vocab = static_cast<int>(rng.uniform_int(1, 4));
    const hmm::Hmm h = hmm::random_hmm(ns, vocab, hmm::Masks::all_allowed(ns), rng);
    const TokenSeq obs = random_observation(rng, 6, vocab);
    const double want = oracle::enumerate_likelihood(h, obs);
    worst_forward = std::max(worst_forward, std::abs(std::exp(hmm::log_likelihood(h, obs)) - want) / want);
  }
  o.require(worst_forward <= kHmmRelTol, "forward rel. err " + fmt("%.3g", worst_forward));

  int em_drops = 0;
  double worst_drop = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int ns = static_cast<int>(rng.uniform_int(2, 6));
    const hmm::Masks masks = random_masks(rng, ns);
    std::vector<TokenSeq> data;
    for (int i = 0; i < 5; ++i) data.push_back(random_observation(rng, 12, 4));
    hmm::FitOptions opts;
    opts.max_iters = 10;
    opts.tolerance = -std::numeric_limits<double>::infinity();
    Rng fit_rng = rng.child("fit", static_cast<std::uint64_t>(rep));
    const hmm::FitResult r = hmm::baum_welch_fit(data, ns, 4, masks, opts, fit_rng);
    if (r.log_likelihoods.size() != 10) ++em_drops;
    for (std::size_t k = 1; k < r.log_likelihoods.size(); ++k) {
      const double drop = r.log_likelihoods[k - 1] - r.log_likelihoods[k];
      worst_drop = std::max(worst_drop, drop);
      if (drop > kEmTol) ++em_drops;
    }
  }
  o.require(em_drops == 0, std::to_string(em_drops) + " EM likelihood decreases");

  double worst_pfa = 0.0;
  const GenerationParams params;
  int strings = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng prng = Rng(5005).child("pfa", seed);
    const Pfa pfa = to_pfa(minimize(sample_dfa(params, prng).dfa));
    const hmm::Hmm h = oracle::hmm_from_pfa(pfa);
    for (int k = 0; k < 5; ++k, ++strings) {
      const TokenSeq s = sample_string(pfa, params, prng);
      const double want = oracle::pfa_string_probability(pfa, s);
      worst_pfa = std::max(worst_pfa, std::abs(std::exp(hmm::log_likelihood(h, s)) - want) / want);
    }
  }
  o.require(worst_pfa <= kHmmRelTol, "HMM-from-PFA rel. err " + fmt("%.3g", worst_pfa));
  o.note("forward rel. err " + fmt("%.2g", worst_forward) + ", largest EM step-down " + fmt("%.2g", worst_drop) +
         ", PFA strings " + std::to_string(strings) + " rel. err " + fmt("%.2g", worst_pfa));
  return o;
}

// ---- 6 ----
TokenSeq random_tokens(Rng& rng, int max_len, int symbols) {
  TokenSeq t(static_cast<std::size_t>(rng.uniform_int(1, max_len)));
  for (auto& x : t) x = static_cast<Token>(rng.uniform_int(0, symbols - 1));
  return t;
}

MatrixXd random_matrix(Rng& rng, int r, int c) {
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform01() * 2.0 - 1.0;
  return m;
}

Outcome mask_count_equivalence() {
  Outcome o;
  Rng rng(6006);
  nghead::NghWeights head = nghead::NghWeights::zeros(kVocabSize);
  head.W2 = MatrixXd::Identity(kVocabSize, kVocabSize);
  long mismatches = 0, entries = 0;
  for (int rep = 0; rep < 500; ++rep) {
    const TokenSeq t = random_tokens(rng, 64, static_cast<int>(rng.uniform_int(2, 6)));
    MatrixXd onehot = MatrixXd::Zero(static_cast<Eigen::Index>(t.size()), kVocabSize);
    for (std::size_t i = 0; i < t.size(); ++i) onehot(static_cast<Eigen::Index>(i), t[i]) = 1.0;
    for (int n = 1; n <= 3; ++n) {
      const MatrixXd out = nghead::ngh_forward(onehot, t, head, n, 1);
      for (int i = 0; i < static_cast<int>(t.size()); ++i) {
        const auto want = oracle::raw_continuations(t, i, n);
        for (int w = 0; w < kVocabSize; ++w, ++entries)
          if (out(i, w) != want[static_cast<std::size_t>(w)]) ++mismatches;
      }
    }
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " head entries differ from raw counts");

  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int d = static_cast<int>(rng.uniform_int(2, 16));
    const TokenSeq t = random_tokens(rng, 48, 4);
    const int n = static_cast<int>(rng.uniform_int(1, 3));
    nghead::BlockWeights w;
    auto vec = [&](int k) { return VectorXd(random_matrix(rng, k, 1).col(0)); };
    w.ngh = {random_matrix(rng, d, d), random_matrix(rng, d, d), vec(d), vec(d)};
    w.norm1 = vec(d);
    w.norm2 = vec(d);
    w.mlp_in = random_matrix(rng, d, d);
    w.mlp_out = random_matrix(rng, d, d);
    w.mlp_in_bias = vec(d);
    w.mlp_out_bias = vec(d);
    const MatrixXd h = random_matrix(rng, static_cast<int>(t.size()), d);
    const MatrixXd got = nghead::ngram_block_forward(h, t, w, n);
    const oracle::Mat want = oracle::ngram_block(oracle::to_rows(h), t, w, n);
    for (std::size_t i = 0; i < t.size(); ++i)
      for (int z = 0; z < d; ++z)
        worst = std::max(worst, std::abs(got(static_cast<Eigen::Index>(i), z) - want[i][static_cast<std::size_t>(z)]));
  }
  o.require(worst <= kBlockTol, "block max abs diff " + fmt("%.3g", worst));
  o.note(std::to_string(entries) + " head entries exact, block max abs diff " + fmt("%.2g", worst));
  return o;
}

// ---- 7 ----
Outcome baseline_ordering() {
  Outcome o;
  const Dataset ds = build_dataset(GenerationParams{}, 0, 500, 7007);
  auto run = [&](auto&& predict) {
    std::vector<PredictionTrace> traces;
    for (const auto& inst : ds.test) traces.push_back(predict(inst));
    return evaluate("m", traces, ds.test, ds.manifest.params);
  };
  const EvalReport r3 = run([](const ProblemInstance& i) { return ngram::predict_instance(i, 3); });
  const EvalReport r2 = run([](const ProblemInstance& i) { return ngram::predict_instance(i, 2); });
  const EvalReport ru = run([](const ProblemInstance& i) { return uniform_trace(i); });
  const double guess = random_guess_accuracy(ds.test, ds.manifest.params);

  o.require(r3.mean_tvd < r2.mean_tvd && r2.mean_tvd < ru.mean_tvd, "TVD ordering 3-gram < 2-gram < uniform broken");
  o.require(r3.accuracy >= 2.0 * guess, "3-gram accuracy below twice the random-guess accuracy");
  o.require(r3.accuracy >= 2.0 * ru.accuracy, "3-gram accuracy below twice the uniform predictor's accuracy");
  o.require(std::abs(r3.mean_tvd - kFrozenTvd3) <= kFrozenTol, "3-gram TVD " + fmt("%.10f", r3.mean_tvd) + " moved");
  o.require(std::abs(r2.mean_tvd - kFrozenTvd2) <= kFrozenTol, "2-gram TVD " + fmt("%.10f", r2.mean_tvd) + " moved");
  o.require(std::abs(ru.mean_tvd - kFrozenTvdUniform) <= kFrozenTol,
            "uniform TVD " + fmt("%.10f", ru.mean_tvd) + " moved");
  o.require(std::abs(r3.accuracy - kFrozenAcc3) <= kFrozenTol, "3-gram accuracy " + fmt("%.10f", r3.accuracy) + " moved");
  o.note("TVD 3-gram " + fmt("%.4f", r3.mean_tvd) + " < 2-gram " + fmt("%.4f", r2.mean_tvd) + " < uniform " +
         fmt("%.4f", ru.mean_tvd) + "; accuracy 3-gram " + fmt("%.4f", r3.accuracy) + " vs random guess " +
         fmt("%.4f", guess) + " and uniform argmax " + fmt("%.4f", ru.accuracy));
  return o;
}

// ---- 8 ----
double worst_gradient_error(const MatrixXd& x, const TokenSeq& y, reweight::MlpParams p, Rng& rng) {
  const reweight::Gradients g = reweight::loss_and_gradients(x, y, p);
  const double h = 1e-4;
  double worst = 0.0;
  auto probe = [&](auto& tensor, const auto& grad) {
    for (int k = 0; k < 8; ++k) {
      const auto r = static_cast<Eigen::Index>(rng.uniform_int(0, tensor.rows() - 1));
      const auto c = static_cast<Eigen::Index>(rng.uniform_int(0, tensor.cols() - 1));
      const double keep = tensor(r, c);
      tensor(r, c) = keep + h;
      const double up = reweight::loss_and_gradients(x, y, p).loss;
      tensor(r, c) = keep - h;
      const double down = reweight::loss_and_gradients(x, y, p).loss;
      tensor(r, c) = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grad(r, c);
      worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-7}));
    }
  };
  probe(p.W1, g.grad.W1);
  probe(p.b1, g.grad.b1);
  probe(p.W2, g.grad.W2);
  probe(p.b2, g.grad.b2);
  return worst;
}

Outcome lnw_training() {
  Outcome o;
  Rng rng(8008);
  double worst_grad = 0.0;
  for (auto v : {reweight::Variant::Counts, reweight::Variant::Frequencies, reweight::Variant::Binary}) {
    const reweight::FeatureSpec spec{v};
    TokenSeq t(60);
    for (auto& x : t) x = rng.uniform01() < 0.15 ? kDelimiter : static_cast<Token>(rng.uniform_int(0, 4));
    const MatrixXd x = reweight::instance_features(t, spec);
    worst_grad = std::max(worst_grad, worst_gradient_error(x, t, reweight::MlpParams::init(spec.width(), 9, rng), rng));
  }
  o.require(worst_grad <= kGradTol, "gradient rel. err " + fmt("%.3g", worst_grad));

  const Dataset ds = build_dataset(GenerationParams{}, 2500, 500, 8008);
  const reweight::FeatureSpec spec;  // frequency features, orders 1-3
  reweight::TrainConfig cfg;         // default width, batch, optimizer
  cfg.epochs = kSmokeEpochs;
  Rng train_rng = Rng(8008).child("train");
  const auto t0 = Clock::now();
  const reweight::TrainResult trained = reweight::train(ds.train, spec, cfg, train_rng);
  const double elapsed = seconds_since(t0);
  // Each epoch costs at most elapsed / epochs (the initial loss pass is included).
  const double projected = elapsed / kSmokeEpochs * reweight::TrainConfig{}.epochs;
  o.require(elapsed < kSmokeTrainSeconds, "smoke training took " + fmt("%.1f", elapsed) + " s");
  o.require(projected < kFullTrainSeconds, "projected full training " + fmt("%.0f", projected) + " s");

  std::vector<PredictionTrace> lnw, uni, uni1;
  for (const auto& inst : ds.test) {
    lnw.push_back(reweight::predict_instance(inst, trained.params, spec));
    uni.push_back(uniform_trace(inst));
    uni1.push_back(ngram::predict_instance(inst, 1));
  }
  const double tvd_lnw = tvd_to_ground_truth(lnw, ds.test, ds.manifest.params);
  const double tvd_uni = tvd_to_ground_truth(uni, ds.test, ds.manifest.params);
  const double tvd_1 = tvd_to_ground_truth(uni1, ds.test, ds.manifest.params);
  o.require(tvd_lnw < tvd_uni, "trained TVD " + fmt("%.4f", tvd_lnw) + " not below uniform " + fmt("%.4f", tvd_uni));
  o.require(tvd_lnw < tvd_1, "trained TVD " + fmt("%.4f", tvd_lnw) + " not below 1-gram " + fmt("%.4f", tvd_1));
  o.note("gradient rel. err " + fmt("%.2g", worst_grad) + "; test TVD lnw_r " + fmt("%.4f", tvd_lnw) + " < 1-gram " +
         fmt("%.4f", tvd_1) + " < uniform " + fmt("%.4f", tvd_uni) + "; " + std::to_string(kSmokeEpochs) +
         "-epoch run " + fmt("%.0f", elapsed) + " s, 50 epochs projected " + fmt("%.0f", projected) + " s");
  return o;
}

// ---- 9 ----
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int sh(const std::string& cmd) { return std::system((cmd + " >/dev/null").c_str()); }

Outcome reproducibility() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / ("icll_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string cli = ICLL_CLI_PATH;
  const std::vector<std::string> files{"data/manifest.json", "data/train.jsonl", "data/test.jsonl",
                                       "ngram3.jsonl",       "bw.jsonl",         "lnw_r.params.json",
                                       "lnw_r.jsonl",        "ngram3.json",      "bw.json",
                                       "lnw_r.json",         "pairwise.csv"};
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    fs::create_directories(dir);
    const std::string d = dir.string();
    int rc = 0;
    rc |= sh(cli + " generate --seed 9009 --n-train 100 --n-test 100 --out " + d + "/data");
    rc |= sh(cli + " predict --model ngram:3 --data " + d + "/data --out " + d + "/ngram3.jsonl");
    rc |= sh(cli + " predict --model bw --seed 9009 --data " + d + "/data --out " + d + "/bw.jsonl");
    rc |= sh(cli + " train-reweight --variant lnw_r --seed 9009 --epochs 3 --data " + d + "/data --out " + d +
             "/lnw_r.params.json");
    rc |= sh(cli + " predict --model lnw_r --params " + d + "/lnw_r.params.json --data " + d + "/data --out " + d +
             "/lnw_r.jsonl");
    for (const char* m : {"ngram3", "bw", "lnw_r"})
      rc |= sh(cli + " eval --data " + d + "/data --traces " + d + "/" + m + ".jsonl --out " + d + "/" + m + ".json");
    rc |= sh(cli + " pairwise " + d + "/ngram3.jsonl " + d + "/bw.jsonl " + d + "/lnw_r.jsonl --out " + d +
             "/pairwise.csv");
    o.require(rc == 0, std::string("pipeline run ") + run + " failed");
    if (rc != 0) return o;
  }
  int differing = 0;
  for (const auto& f : files) {
    const std::string a = slurp(root / "a" / f), b = slurp(root / "b" / f);
    if (a.empty() || a != b) {
      ++differing;
      o.require(false, f + " differs or is empty");
    }
  }

  // Symmetric with a zero diagonal.
  std::ifstream csv(root / "a" / "pairwise.csv");
  std::string line;
  std::getline(csv, line);
  std::vector<std::vector<double>> m;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    m.emplace_back();
    while (std::getline(ss, cell, ',')) m.back().push_back(std::stod(cell));
  }
  bool shape = m.size() == 3;
  for (const auto& r : m) shape &= r.size() == m.size();
  o.require(shape, "pairwise matrix is not 3x3");
  if (shape)
    for (std::size_t i = 0; i < m.size(); ++i) {
      o.require(m[i][i] == 0.0, "nonzero diagonal");
      for (std::size_t j = 0; j < m.size(); ++j) o.require(m[i][j] == m[j][i], "asymmetric entry");
    }
  fs::remove_all(root);
  if (o.pass) o.note(std::to_string(files.size()) + " artifacts byte-identical across two runs");
  return o;
}

}  // namespace

// Optional arguments select criteria by number.
int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const std::vector<Criterion> criteria{
      {1, "dataset statistics", dataset_statistics},
      {2, "minimization oracle", minimization_oracle},
      {3, "oracle calibration", oracle_calibration},
      {4, "n-gram correctness", ngram_correctness},
      {5, "HMM numerics", hmm_numerics},
      {6, "mask-count equivalence", mask_count_equivalence},
      {7, "baseline ordering", baseline_ordering},
      {8, "reweighting training", lnw_training},
      {9, "reproducibility", reproducibility},
  };
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
