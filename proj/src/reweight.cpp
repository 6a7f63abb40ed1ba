#include "icll/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace icll::reweight {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Counts: return "lnw";
    case Variant::Frequencies: return "lnw_r";
    case Variant::Binary: return "lnw_b";
  }
  return "lnw";
}

Variant parse_variant(const std::string& name) {
  if (name == "lnw" || name == "counts") return Variant::Counts;
  if (name == "lnw_r" || name == "frequencies") return Variant::Frequencies;
  if (name == "lnw_b" || name == "binary") return Variant::Binary;
  throw std::invalid_argument("unknown reweighting variant \"" + name + "\" (expected lnw, lnw_r or lnw_b)");
}

namespace {

using Row = std::array<std::uint32_t, kVocabSize>;

std::uint64_t context_key(std::span<const Token> ctx) {
  std::uint64_t key = ctx.size();
  for (Token t : ctx) key = key * (kVocabSize + 1) + static_cast<std::uint64_t>(t) + 1;
  return key;
}

void write_block(const Row* row, Variant variant, double* out) {
  double total = 0.0;
  if (row)
    for (auto c : *row) total += c;
  for (std::size_t w = 0; w < kVocabSize; ++w) {
    const double c = row ? (*row)[w] : 0.0;
    switch (variant) {
      case Variant::Counts: out[w] = c - 1.0; break;
      case Variant::Frequencies: out[w] = total > 0.0 ? c / total : 0.0; break;
      case Variant::Binary: out[w] = c > 0.0 ? 1.0 : 0.0; break;
    }
  }
}

void check_orders(const FeatureSpec& spec) {
  for (int n : spec.orders)
    if (n < 1 || n > 8) throw std::invalid_argument("feature orders must lie in [1, 8]");
}

}  // namespace

VectorXd extract_features(std::span<const Token> prefix, std::size_t i, const FeatureSpec& spec) {
  check_orders(spec);
  if (i > prefix.size()) throw std::out_of_range("extract_features: position past the prefix");
  VectorXd f(spec.width());
  for (std::size_t b = 0; b < spec.orders.size(); ++b) {
    const auto n = static_cast<std::size_t>(spec.orders[b]);
    const std::size_t ctx_len = n - 1;
    Row row{};
    bool has_context = i >= ctx_len;
    if (has_context) {
      const auto ctx = prefix.subspan(i - ctx_len, ctx_len);
      // windows [p, p + ctx_len] fully inside prefix[0, i)
      for (std::size_t p = 0; p + ctx_len < i; ++p)
        if (std::equal(ctx.begin(), ctx.end(), prefix.begin() + static_cast<std::ptrdiff_t>(p)))
          ++row[static_cast<std::size_t>(prefix[p + ctx_len])];
    }
    write_block(has_context ? &row : nullptr, spec.variant, f.data() + b * kVocabSize);
  }
  return f;
}

MatrixXd instance_features(std::span<const Token> tokens, const FeatureSpec& spec) {
  check_orders(spec);
  const std::size_t L = tokens.size();
  // Row-major scratch so each block is contiguous.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(static_cast<Eigen::Index>(L), spec.width());
  std::vector<std::unordered_map<std::uint64_t, Row>> tables(spec.orders.size());
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t b = 0; b < spec.orders.size(); ++b) {
      const std::size_t ctx_len = static_cast<std::size_t>(spec.orders[b]) - 1;
      const Row* row = nullptr;
      if (i >= ctx_len) {
        auto it = tables[b].find(context_key(tokens.subspan(i - ctx_len, ctx_len)));
        static const Row kEmpty{};
        row = it == tables[b].end() ? &kEmpty : &it->second;
      }
      write_block(row, spec.variant, f.data() + i * static_cast<std::size_t>(spec.width()) + b * kVocabSize);
    }
    for (std::size_t b = 0; b < spec.orders.size(); ++b) {
      const std::size_t ctx_len = static_cast<std::size_t>(spec.orders[b]) - 1;
      if (i < ctx_len) continue;
      ++tables[b][context_key(tokens.subspan(i - ctx_len, ctx_len))][static_cast<std::size_t>(tokens[i])];
    }
  }
  return f;
}

MlpParams MlpParams::zeros(int features, int hidden, int vocab) {
  return {MatrixXd::Zero(features, hidden), VectorXd::Zero(hidden), MatrixXd::Zero(hidden, vocab), VectorXd::Zero(vocab)};
}

MlpParams MlpParams::init(int features, int hidden, Rng& rng, int vocab) {
  MlpParams p = zeros(features, hidden, vocab);
  auto fill = [&rng](auto& m, double bound) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = (2.0 * rng.uniform01() - 1.0) * bound;
  };
  const double b1 = 1.0 / std::sqrt(static_cast<double>(features));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill(p.W1, b1);
  fill(p.b1, b1);
  fill(p.W2, b2);
  fill(p.b2, b2);
  return p;
}

bool MlpParams::operator==(const MlpParams& o) const {
  auto same = [](const auto& a, const auto& b) { return a.rows() == b.rows() && a.cols() == b.cols() && a == b; };
  return same(W1, o.W1) && same(b1, o.b1) && same(W2, o.W2) && same(b2, o.b2);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

namespace {

void check_shapes(const MatrixXd& features, const MlpParams& p) {
  if (features.cols() != p.W1.rows() || p.b1.size() != p.W1.cols() || p.W2.rows() != p.W1.cols() ||
      p.b2.size() != p.W2.cols())
    throw ShapeMismatch("mlp: feature width " + std::to_string(features.cols()) + " does not fit parameters " +
                        std::to_string(p.W1.rows()) + "x" + std::to_string(p.W1.cols()) + " / " +
                        std::to_string(p.W2.rows()) + "x" + std::to_string(p.W2.cols()));
}

}  // namespace

MatrixXd mlp_forward(const MatrixXd& features, const MlpParams& p) {
  check_shapes(features, p);
  MatrixXd z = features * p.W1;
  z.rowwise() += p.b1.transpose();
  MatrixXd logits = z.unaryExpr(&gelu) * p.W2;
  logits.rowwise() += p.b2.transpose();
  return logits;
}

namespace {

// Scratch matrices reused across steps; blocks of the first N rows are used.
struct Workspace {
  MatrixXd z, a, dact, logits, dlogits, dz;

  void reserve(Eigen::Index rows, Eigen::Index hidden, Eigen::Index vocab) {
    if (z.rows() >= rows && z.cols() == hidden && logits.cols() == vocab) return;
    z.resize(rows, hidden);
    a.resize(rows, hidden);
    dact.resize(rows, hidden);
    dz.resize(rows, hidden);
    logits.resize(rows, vocab);
    dlogits.resize(rows, vocab);
  }
};

// Writes into g.grad, which must already have the parameter shapes.
void loss_and_gradients_into(const Eigen::Ref<const MatrixXd>& features, std::span<const Token> targets,
                             const MlpParams& p, Workspace& ws, Gradients& g) {
  const Eigen::Index N = features.rows();
  const Eigen::Index H = p.W1.cols();
  const Eigen::Index V = p.W2.cols();
  ws.reserve(N, H, V);
  auto z = ws.z.topRows(N);
  auto a = ws.a.topRows(N);
  auto dact = ws.dact.topRows(N);
  auto logits = ws.logits.topRows(N);
  auto dlogits = ws.dlogits.topRows(N);
  auto dz = ws.dz.topRows(N);

  z.noalias() = features * p.W1;
  z.rowwise() += p.b1.transpose();
  // gelu and its derivative share one erf
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
  for (Eigen::Index c = 0; c < H; ++c)
    for (Eigen::Index r = 0; r < N; ++r) {
      const double x = z(r, c);
      const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      a(r, c) = x * cdf;
      dact(r, c) = cdf + x * std::exp(-0.5 * x * x) * inv_sqrt2pi;
    }
  logits.noalias() = a * p.W2;
  logits.rowwise() += p.b2.transpose();

  // softmax - onehot, scaled by 1/N
  double loss = 0.0;
  for (Eigen::Index r = 0; r < N; ++r) {
    const double mx = logits.row(r).maxCoeff();
    double total = 0.0;
    for (Eigen::Index v = 0; v < V; ++v) total += (dlogits(r, v) = std::exp(logits(r, v) - mx));
    const auto y = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(r)]);
    loss += std::log(total) - (logits(r, y) - mx);
    dlogits.row(r) /= total;
    dlogits(r, y) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(N);
  dlogits *= inv;

  g.loss = loss * inv;
  g.grad.W2.noalias() = a.transpose() * dlogits;
  g.grad.b2 = dlogits.colwise().sum().transpose();
  dz.noalias() = dlogits * p.W2.transpose();
  dz.array() *= dact.array();
  g.grad.W1.noalias() = features.transpose() * dz;
  g.grad.b1 = dz.colwise().sum().transpose();
}

}  // namespace

Gradients loss_and_gradients(const MatrixXd& features, std::span<const Token> targets, const MlpParams& p) {
  check_shapes(features, p);
  if (static_cast<std::size_t>(features.rows()) != targets.size())
    throw ShapeMismatch("loss: one target per feature row");
  Workspace ws;
  Gradients g{0.0, MlpParams::zeros(static_cast<int>(p.W1.rows()), static_cast<int>(p.W1.cols()),
                                    static_cast<int>(p.W2.cols()))};
  loss_and_gradients_into(features, targets, p, ws, g);
  return g;
}

double mean_loss(const std::vector<ProblemInstance>& instances, const FeatureSpec& spec, const MlpParams& params) {
  CompensatedSum total;
  double count = 0.0;
  for (const auto& inst : instances) {
    if (inst.tokens.empty()) continue;
    const MatrixXd logits = mlp_forward(instance_features(inst.tokens, spec), params);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const double mx = logits.row(r).maxCoeff();
      const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
      total.add(lse - logits(r, static_cast<Eigen::Index>(inst.tokens[static_cast<std::size_t>(r)])));
    }
    count += static_cast<double>(inst.tokens.size());
  }
  return count > 0 ? total.value() / count : 0.0;
}

namespace {

struct AdamState {
  MlpParams m, v;
  long step = 0;
};

template <typename T>
void adam_update(T& param, const T& grad, T& m, T& v, double lr, const TrainConfig& c, double bc1, double bc2) {
  m = c.beta1 * m + (1.0 - c.beta1) * grad;
  v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.adam_eps);
}

}  // namespace

TrainResult train(const std::vector<ProblemInstance>& instances, const FeatureSpec& spec, const TrainConfig& config,
                  Rng& rng) {
  if (instances.empty()) throw std::invalid_argument("train: empty train split");
  if (config.batch_size < 1 || config.hidden < 1 || config.epochs < 0) throw std::invalid_argument("train: bad config");

  Rng init_rng = rng.child("init");
  TrainResult result{MlpParams::init(spec.width(), config.hidden, init_rng), 0.0, {}};
  MlpParams& p = result.params;
  result.initial_loss = mean_loss(instances, spec, p);

  AdamState adam{MlpParams::zeros(spec.width(), config.hidden), MlpParams::zeros(spec.width(), config.hidden), 0};
  double lr = config.lr;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  double last_finite = result.initial_loss;

  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::size_t max_tokens = 0;
  for (const auto& inst : instances) max_tokens = std::max(max_tokens, inst.tokens.size());
  const auto cap = static_cast<Eigen::Index>(max_tokens * static_cast<std::size_t>(config.batch_size));
  MatrixXd x(cap, spec.width());
  Workspace ws;
  Gradients g{0.0, MlpParams::zeros(spec.width(), config.hidden)};
  TokenSeq targets;
  targets.reserve(static_cast<std::size_t>(cap));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle = rng.child("epoch", static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> perm = shuffle.sample_without_replacement<std::size_t>(order, order.size());

    CompensatedSum epoch_loss;
    double epoch_tokens = 0.0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(perm.size(), start + static_cast<std::size_t>(config.batch_size));
      std::size_t rows = 0;
      for (std::size_t k = start; k < stop; ++k) rows += instances[perm[k]].tokens.size();
      if (rows == 0) continue;
      targets.clear();
      Eigen::Index at = 0;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& tokens = instances[perm[k]].tokens;
        if (tokens.empty()) continue;
        x.middleRows(at, static_cast<Eigen::Index>(tokens.size())) = instance_features(tokens, spec);
        at += static_cast<Eigen::Index>(tokens.size());
        targets.insert(targets.end(), tokens.begin(), tokens.end());
      }

      loss_and_gradients_into(x.topRows(static_cast<Eigen::Index>(rows)), targets, p, ws, g);
      if (!std::isfinite(g.loss))
        throw DivergenceDetected("training loss became non-finite in epoch " + std::to_string(epoch), last_finite);
      epoch_loss.add(g.loss * static_cast<double>(rows));
      epoch_tokens += static_cast<double>(rows);

      ++adam.step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.step));
      adam_update(p.W1, g.grad.W1, adam.m.W1, adam.v.W1, lr, config, bc1, bc2);
      adam_update(p.b1, g.grad.b1, adam.m.b1, adam.v.b1, lr, config, bc1, bc2);
      adam_update(p.W2, g.grad.W2, adam.m.W2, adam.v.W2, lr, config, bc1, bc2);
      adam_update(p.b2, g.grad.b2, adam.m.b2, adam.v.b2, lr, config, bc1, bc2);
    }

    const double mean = epoch_tokens > 0 ? epoch_loss.value() / epoch_tokens : 0.0;
    if (!std::isfinite(mean)) throw DivergenceDetected("epoch-mean loss is non-finite", last_finite);
    last_finite = mean;
    result.curve.push_back({epoch, mean, lr});

    if (mean < best * (1.0 - config.plateau_threshold)) {
      best = mean;
      bad_epochs = 0;
    } else if (++bad_epochs > config.patience) {
      lr = std::max(lr * config.factor, config.min_lr);
      bad_epochs = 0;
    }
  }
  return result;
}

PredictionTrace predict_instance(const ProblemInstance& instance, const MlpParams& params, const FeatureSpec& spec) {
  PredictionTrace trace{instance.id, {}};
  if (instance.tokens.empty()) return trace;
  const MatrixXd logits = mlp_forward(instance_features(instance.tokens, spec), params);
  if (logits.cols() != kVocabSize) throw ShapeMismatch("predict_instance: model output is not vocabulary-sized");
  trace.probs.resize(instance.tokens.size());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Distribution& row = trace.probs[static_cast<std::size_t>(r)];
    const double mx = logits.row(r).maxCoeff();
    double total = 0.0;
    for (int v = 0; v < kVocabSize; ++v) total += (row[static_cast<std::size_t>(v)] = std::exp(logits(r, v) - mx));
    for (double& x : row) x /= total;
  }
  return trace;
}

namespace {

template <typename M>
nlohmann::json tensor_json(const M& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

MatrixXd tensor_from_json(const nlohmann::json& j, const char* name) {
  const auto& t = j.at(name);
  const auto rows = t.at("shape").at(0).get<Eigen::Index>();
  const auto cols = t.at("shape").at(1).get<Eigen::Index>();
  const auto data = t.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
    throw std::runtime_error(std::string("params file: tensor ") + name + " has a bad shape header");
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  const MlpParams& p = model.params;
  nlohmann::json j = {{"format", "icll-mlp"},
                      {"version", 1},
                      {"variant", variant_name(model.spec.variant)},
                      {"orders", model.spec.orders},
                      {"hidden", p.hidden()},
                      {"tensors",
                       {{"W1", tensor_json(p.W1)},
                        {"b1", tensor_json(p.b1)},
                        {"W2", tensor_json(p.W2)},
                        {"b2", tensor_json(p.b2)}}}};
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << j.dump() << '\n';
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing params file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("params file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != "icll-mlp") throw std::runtime_error("params file " + path.string() + " has an unknown format");
  Model m;
  m.spec.variant = parse_variant(j.at("variant").get<std::string>());
  m.spec.orders = j.at("orders").get<std::vector<int>>();
  const auto& t = j.at("tensors");
  m.params.W1 = tensor_from_json(t, "W1");
  m.params.b1 = tensor_from_json(t, "b1").col(0);
  m.params.W2 = tensor_from_json(t, "W2");
  m.params.b2 = tensor_from_json(t, "b2").col(0);
  if (m.params.W1.rows() != m.spec.width()) throw ShapeMismatch("params file: W1 rows do not match the feature width");
  check_shapes(MatrixXd(0, m.spec.width()), m.params);
  return m;
}

std::string curve_to_csv(const std::vector<EpochRecord>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,mean_loss,lr\n";
  for (const auto& r : curve) out << r.epoch << ',' << r.mean_loss << ',' << r.lr << '\n';
  return out.str();
}

}  // namespace icll::reweight
