// Command-line front end: generate, predict, eval, pairwise, train-reweight, inspect.

#include <cstdlib>
#include <cstring>
#include <functional>
#include <memory>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "icll/dataset.hpp"
#include "icll/hmm.hpp"
#include "icll/metrics.hpp"
#include "icll/ngram.hpp"
#include "icll/nghead.hpp"
#include "icll/parallel.hpp"
#include "icll/reweight.hpp"
#include "icll/trace_io.hpp"

namespace fs = std::filesystem;
using namespace icll;

namespace {

// Bad flags, unknown names, missing inputs. Exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int default_threads() {
  if (const char* env = std::getenv("ICLL_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("ICLL_THREADS must be a positive integer, got \"") + env + "\"");
  }
  return 1;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw UsageError("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    write_text(out, text);
}

const std::vector<ProblemInstance>& pick_split(const Dataset& ds, const std::string& split) {
  if (split == "test") return ds.test;
  if (split == "train") return ds.train;
  throw UsageError("unknown split \"" + split + "\" (expected train or test)");
}

// ---- generate ----

struct GenerateArgs {
  std::uint64_t seed = 0;
  std::int64_t n_train = 0;
  std::int64_t n_test = 500;
  std::string out;
  std::vector<std::int64_t> subsets;
  int threads = 1;
};

int cmd_generate(const GenerateArgs& a) {
  fs::create_directories(a.out);
  Dataset ds = build_dataset(GenerationParams{}, a.n_train, a.n_test, a.seed, a.threads);
  save_dataset(ds, a.out);
  if (!a.subsets.empty()) write_training_subsets(ds, a.out, training_subsets(ds.manifest, a.subsets, a.seed));
  const auto& s = ds.manifest.stats;
  std::printf("wrote %lld train + %lld test instances to %s\n", static_cast<long long>(a.n_train),
              static_cast<long long>(a.n_test), a.out.c_str());
  std::printf("mean tokens %.2f, mean symbols %.2f, mean strings %.2f, mean states %.2f\n", s.mean_tokens,
              s.mean_symbols, s.mean_strings, s.mean_states);
  return 0;
}

// ---- predict ----

struct PredictArgs {
  std::string model;
  std::string data;
  std::string split = "test";
  std::string out;
  int bw_iters = 10;
  int bw_states = 12;
  std::string refit = "per-string";
  std::string params;
  std::uint64_t seed = 0;
  int threads = 1;
};

int cmd_predict(const PredictArgs& a) {
  const Dataset ds = load_dataset(a.data);
  const auto& instances = pick_split(ds, a.split);
  const GenerationParams& gp = ds.manifest.params;

  std::function<PredictionTrace(const ProblemInstance&)> predictor;
  const std::string& m = a.model;
  if (m == "oracle") {
    predictor = [&](const ProblemInstance& inst) { return oracle_trace(inst, gp); };
  } else if (m == "uniform") {
    predictor = [](const ProblemInstance& inst) { return uniform_trace(inst); };
  } else if (m.rfind("ngram:", 0) == 0) {
    int order = 0;
    try {
      order = std::stoi(m.substr(6));
    } catch (const std::exception&) {
      throw UsageError("bad n-gram order in \"" + m + "\"");
    }
    if (order < 1 || order > ngram::kMaxOrder) throw UsageError("n-gram order must lie in [1, 12]");
    predictor = [order](const ProblemInstance& inst) { return ngram::predict_instance(inst, order); };
  } else if (m == "bw") {
    hmm::PredictOptions opts;
    opts.base_states = a.bw_states;
    opts.fit.max_iters = a.bw_iters;
    opts.seed = a.seed;
    if (a.refit == "per-string")
      opts.refit = hmm::Refit::PerString;
    else if (a.refit == "every-position")
      opts.refit = hmm::Refit::EveryPosition;
    else
      throw UsageError("unknown --refit \"" + a.refit + "\" (expected per-string or every-position)");
    if (opts.base_states < 1 || opts.base_states > 12) throw UsageError("--bw-states must lie in [1, 12]");
    if (opts.fit.max_iters < 1) throw UsageError("--bw-iters must be positive");
    predictor = [opts, &gp](const ProblemInstance& inst) { return hmm::predict_instance(inst, opts, gp); };
  } else if (m == "lnw" || m == "lnw_r" || m == "lnw_b") {
    if (a.params.empty()) throw UsageError("--model " + m + " needs --params (run train-reweight first)");
    if (!fs::exists(a.params)) throw UsageError("missing params file " + a.params + " (run train-reweight first)");
    auto model = std::make_shared<reweight::Model>(reweight::load_model(a.params));
    if (reweight::variant_name(model->spec.variant) != m)
      throw UsageError("params file " + a.params + " holds a " + reweight::variant_name(model->spec.variant) +
                       " model, not " + m);
    predictor = [model](const ProblemInstance& inst) { return reweight::predict_instance(inst, model->params, model->spec); };
  } else if (m == "nghead-demo") {
    auto stack = std::make_shared<nghead::StackedNgh>(nghead::StackedNgh::demo({1, 2, 3}));
    predictor = [stack](const ProblemInstance& inst) { return nghead::stacked_ngh_predict(inst, *stack); };
  } else {
    throw UsageError("unknown predictor \"" + m +
                     "\" (expected oracle, uniform, ngram:N, bw, lnw, lnw_r, lnw_b or nghead-demo)");
  }

  std::vector<PredictionTrace> traces(instances.size());
  parallel_for(instances.size(), a.threads, [&](std::size_t i) { traces[i] = predictor(instances[i]); });
  write_traces(traces, a.out);
  std::printf("wrote %zu traces to %s\n", traces.size(), a.out.c_str());
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string data;
  std::string split = "test";
  std::string traces;
  std::string model;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const Dataset ds = load_dataset(a.data);
  const auto& instances = pick_split(ds, a.split);
  const auto traces = read_traces(a.traces);
  std::string name = a.model;
  if (name.empty()) {
    name = fs::path(a.traces).filename().string();
    for (const char* suffix : {".jsonl", ".traces"})
      if (name.size() > std::strlen(suffix) && name.compare(name.size() - std::strlen(suffix), std::string::npos, suffix) == 0)
        name.resize(name.size() - std::strlen(suffix));
  }
  const EvalReport report = evaluate(name, traces, instances, ds.manifest.params);
  emit(a.out, report_to_json(report).dump(2) + "\n");
  if (!a.out.empty() && a.out != "-")
    std::printf("%s: accuracy %.6f, mean TVD %.6f over %lld positions\n", name.c_str(), report.accuracy,
                report.mean_tvd, static_cast<long long>(report.nt));
  return 0;
}

// ---- pairwise ----

struct PairwiseArgs {
  std::vector<std::string> traces;  // name=path or path
  std::size_t horizon = 100;
  std::string out;
};

int cmd_pairwise(const PairwiseArgs& a) {
  if (a.traces.size() < 2) throw UsageError("pairwise needs at least two trace files");
  std::map<std::string, std::vector<PredictionTrace>> by_model;
  for (const auto& spec : a.traces) {
    std::string name, path;
    if (const auto eq = spec.find('='); eq != std::string::npos) {
      name = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    } else {
      path = spec;
      name = fs::path(spec).stem().string();
    }
    if (!by_model.emplace(name, read_traces(path)).second) throw UsageError("duplicate model name \"" + name + "\"");
  }
  emit(a.out, pairwise_to_csv(pairwise_tvd(by_model, a.horizon)));
  return 0;
}

// ---- train-reweight ----

struct TrainArgs {
  std::string variant = "lnw_r";
  std::string data;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string curve;
  reweight::TrainConfig config;
};

int cmd_train(const TrainArgs& a) {
  if (!a.seed) throw UsageError("train-reweight needs --seed");
  const Dataset ds = load_dataset(a.data);
  if (ds.train.empty()) throw UsageError("train split of " + a.data + " is empty");
  reweight::FeatureSpec spec;
  try {
    spec.variant = reweight::parse_variant(a.variant);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Rng rng = Rng(*a.seed).child("train-reweight");
  reweight::TrainResult result;
  try {
    result = reweight::train(ds.train, spec, a.config, rng);
  } catch (const reweight::DivergenceDetected& e) {
    std::fprintf(stderr, "error: %s (last finite loss %.6f)\n", e.what(), e.last_finite_loss);
    return 1;
  }
  reweight::save_model({spec, result.params}, a.out);
  const std::string curve_path = a.curve.empty() ? a.out + ".curve.csv" : a.curve;
  write_text(curve_path, reweight::curve_to_csv(result.curve));
  const double final_loss = result.curve.empty() ? result.initial_loss : result.curve.back().mean_loss;
  std::printf("trained %s: initial loss %.6f, final epoch loss %.6f; params %s, curve %s\n", a.variant.c_str(),
              result.initial_loss, final_loss, a.out.c_str(), curve_path.c_str());
  return 0;
}

// ---- inspect ----

struct InspectArgs {
  std::string data;
  std::string split = "test";
  std::int64_t id = -1;
  std::vector<std::string> mask;  // n=<int> shift=<int>
  bool ground_truth = false;
};

std::string token_name(Token t) { return t == kDelimiter ? "#" : std::to_string(t); }

int cmd_inspect(const InspectArgs& a) {
  const Dataset ds = load_dataset(a.data);
  const auto& instances = pick_split(ds, a.split);
  const ProblemInstance* inst = nullptr;
  for (const auto& candidate : instances)
    if (candidate.id == a.id) inst = &candidate;
  if (!inst) throw UsageError("unknown instance id " + std::to_string(a.id) + " in the " + a.split + " split");

  const Dfa& dfa = inst->pfa.dfa();
  std::printf("instance %lld: %zu strings, %zu tokens, automaton hash %016llx\n", static_cast<long long>(inst->id),
              inst->strings.size(), inst->tokens.size(), static_cast<unsigned long long>(inst->automaton_hash));
  std::printf("automaton: %d states, start %d, sink %d\n", dfa.num_states(), dfa.start(), dfa.sink());
  for (StateId s = 0; s < dfa.num_states(); ++s)
    for (Token x = 0; x < kGlobalSymbols; ++x)
      if (dfa.is_live_edge(s, x))
        std::printf("  %d --%d--> %d  p=%.4f\n", s, x, dfa.target(s, x), inst->pfa.edge_prob(s, x));
  std::printf("strings:\n");
  for (const auto& s : inst->strings) {
    std::printf(" ");
    for (Token t : s) std::printf(" %d", t);
    std::printf("\n");
  }

  if (a.ground_truth) {
    std::printf("ground truth (position, next token, valid set with probabilities):\n");
    const PredictionTrace gt = oracle_trace(*inst, ds.manifest.params);
    for (std::size_t j = 0; j < gt.probs.size(); ++j) {
      std::printf("  %zu %s:", j, token_name(inst->tokens[j]).c_str());
      for (Token t = 0; t < kVocabSize; ++t)
        if (gt.probs[j][static_cast<std::size_t>(t)] > 0.0)
          std::printf(" %s=%.4f", token_name(t).c_str(), gt.probs[j][static_cast<std::size_t>(t)]);
      std::printf("\n");
    }
  }

  if (!a.mask.empty()) {
    int n = 1, shift = 1;
    for (const auto& kv : a.mask) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--mask expects n=<int> shift=<int>, got \"" + kv + "\"");
      const std::string key = kv.substr(0, eq);
      int value = 0;
      try {
        value = std::stoi(kv.substr(eq + 1));
      } catch (const std::exception&) {
        throw UsageError("--mask value in \"" + kv + "\" is not an integer");
      }
      if (key == "n")
        n = value;
      else if (key == "shift")
        shift = value;
      else
        throw UsageError("--mask key must be n or shift, got \"" + key + "\"");
    }
    if (n < 1 || shift < 0) throw UsageError("--mask needs n >= 1 and shift >= 0");
    std::printf("%s\n", nghead::mask_to_json(nghead::build_mask(inst->tokens, n, shift)).dump().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-context language learning toolkit: benchmark generation, predictors, and metrics"};
  app.require_subcommand(1);

  int threads = 1;
  try {
    threads = default_threads();
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  GenerateArgs gen;
  gen.threads = threads;
  auto* g = app.add_subcommand("generate", "Sample a dataset of problem instances");
  g->add_option("--seed", gen.seed, "Root seed")->required();
  g->add_option("--n-train", gen.n_train, "Training instances")->capture_default_str();
  g->add_option("--n-test", gen.n_test, "Test instances")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--subsets", gen.subsets, "Nested training subset sizes");
  g->add_option("--threads", gen.threads, "Worker threads (default ICLL_THREADS or 1)")->check(CLI::PositiveNumber);

  PredictArgs pred;
  pred.threads = threads;
  auto* p = app.add_subcommand("predict", "Run a predictor over a dataset split and write traces");
  p->add_option("--model", pred.model, "oracle | uniform | ngram:N | bw | lnw | lnw_r | lnw_b | nghead-demo")->required();
  p->add_option("--data", pred.data, "Dataset directory or manifest")->required();
  p->add_option("--split", pred.split, "train or test")->capture_default_str();
  p->add_option("--out", pred.out, "Trace file (JSONL)")->required();
  p->add_option("--bw-iters", pred.bw_iters, "Baum-Welch EM iterations")->capture_default_str();
  p->add_option("--bw-states", pred.bw_states, "Base states n; the HMM has n*n states")->capture_default_str();
  p->add_option("--refit", pred.refit, "per-string or every-position")->capture_default_str();
  p->add_option("--params", pred.params, "Reweighting model file from train-reweight");
  p->add_option("--seed", pred.seed, "Seed for randomized predictors")->capture_default_str();
  p->add_option("--threads", pred.threads, "Worker threads (default ICLL_THREADS or 1)")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a trace file against ground truth");
  e->add_option("--data", ev.data, "Dataset directory or manifest")->required();
  e->add_option("--split", ev.split, "train or test")->capture_default_str();
  e->add_option("--traces", ev.traces, "Trace file")->required();
  e->add_option("--model", ev.model, "Model name in the report (default: trace file name)");
  e->add_option("--out", ev.out, "Report path (default stdout)");

  PairwiseArgs pw;
  auto* w = app.add_subcommand("pairwise", "Mean pairwise TVD between models over the first positions");
  w->add_option("traces", pw.traces, "Trace files as name=path or path")->required();
  w->add_option("--horizon", pw.horizon, "Positions per instance")->capture_default_str();
  w->add_option("--out", pw.out, "CSV path (default stdout)");
  w->add_option("--threads", threads, "Accepted for symmetry; pairwise runs single-threaded");

  TrainArgs tr;
  auto* t = app.add_subcommand("train-reweight", "Train a learned n-gram reweighting model");
  t->add_option("--variant", tr.variant, "lnw, lnw_r or lnw_b")->capture_default_str();
  t->add_option("--data", tr.data, "Dataset directory or manifest")->required();
  t->add_option("--seed", tr.seed, "Training seed")->required();
  t->add_option("--out", tr.out, "Params file")->required();
  t->add_option("--curve", tr.curve, "Loss curve CSV (default <out>.curve.csv)");
  t->add_option("--epochs", tr.config.epochs, "Epochs")->capture_default_str();
  t->add_option("--hidden", tr.config.hidden, "Hidden width")->capture_default_str();
  t->add_option("--batch-size", tr.config.batch_size, "Instances per step")->capture_default_str();
  t->add_option("--lr", tr.config.lr, "Initial learning rate")->capture_default_str();
  t->add_option("--threads", threads, "Accepted for symmetry; training runs single-threaded");

  InspectArgs in;
  auto* i = app.add_subcommand("inspect", "Print an instance, its automaton, and optional mask dumps");
  i->add_option("--data", in.data, "Dataset directory or manifest")->required();
  i->add_option("--split", in.split, "train or test")->capture_default_str();
  i->add_option("--id", in.id, "Instance id")->required();
  i->add_option("--mask", in.mask, "Mask dump, e.g. --mask n=2 shift=1")->expected(1, 2);
  i->add_flag("--ground-truth", in.ground_truth, "Print ground-truth rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*p) return cmd_predict(pred);
    if (*e) return cmd_eval(ev);
    if (*w) return cmd_pairwise(pw);
    if (*t) return cmd_train(tr);
    if (*i) return cmd_inspect(in);
  } catch (const UsageError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  } catch (const std::invalid_argument& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  } catch (const std::logic_error& err) {
    std::fprintf(stderr, "internal error: %s\n", err.what());
    return 2;
  } catch (const StateWithNoLiveEdge& err) {
    std::fprintf(stderr, "error: corrupted automaton: %s\n", err.what());
    return 1;
  } catch (const std::exception& err) {
    // Format, version, alignment, and I/O failures.
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 2;
}
