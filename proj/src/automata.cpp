#include "icll/automata.hpp"

#include <algorithm>
#include <deque>
#include <numeric>

namespace icll {

void GenerationParams::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("GenerationParams: ") + what);
  };
  check(n_min >= 2 && n_min <= n_max, "need 2 <= n_min <= n_max");
  check(c_min >= 1 && c_min <= c_max && c_max <= kGlobalSymbols, "need 1 <= c_min <= c_max <= 18");
  check(m_min >= 1 && m_min <= m_max, "need 1 <= m_min <= m_max");
  check(m_min <= std::min(c_min, n_min - 1), "m_min exceeds the smallest available symbol or target set");
  check(len_min >= 1 && len_min <= len_max, "need 1 <= len_min <= len_max");
  check(strings_min >= 1 && strings_min <= strings_max, "need 1 <= strings_min <= strings_max");
}

bool Alphabet::contains(Token t) const {
  return std::binary_search(language_symbols.begin(), language_symbols.end(), t);
}

Dfa::Dfa(int num_states, StateId start, StateId sink)
    : num_states_(num_states),
      start_(start),
      sink_(sink),
      table_(static_cast<std::size_t>(num_states) * kGlobalSymbols, sink == kNoState ? start : sink),
      accepting_(static_cast<std::size_t>(num_states), 0) {
  if (num_states <= 0) throw std::invalid_argument("Dfa: need at least one state");
  if (start < 0 || start >= num_states) throw std::invalid_argument("Dfa: start out of range");
  if (sink != kNoState && (sink < 0 || sink >= num_states)) throw std::invalid_argument("Dfa: sink out of range");
}

SampledAutomaton sample_dfa(const GenerationParams& params, Rng& rng) {
  params.validate();
  const int n = static_cast<int>(rng.uniform_int(params.n_min, params.n_max));
  const int c = static_cast<int>(rng.uniform_int(params.c_min, params.c_max));

  std::vector<Token> shared(kGlobalSymbols);
  std::iota(shared.begin(), shared.end(), Token{0});
  Alphabet alphabet{rng.sample_without_replacement<Token>(shared, static_cast<std::size_t>(c))};
  std::sort(alphabet.language_symbols.begin(), alphabet.language_symbols.end());

  // State 0 is the start state and the reject target at once.
  Dfa dfa(n + 1, 0, 0);
  std::vector<int> degrees;
  degrees.reserve(static_cast<std::size_t>(n) + 1);
  for (StateId s = 0; s <= n; ++s) {
    std::vector<StateId> targets;
    for (StateId t = 1; t <= n; ++t)
      if (t != s) targets.push_back(t);
    const int cap = std::min({params.m_max, c, static_cast<int>(targets.size())});
    const int m = static_cast<int>(rng.uniform_int(params.m_min, cap));
    auto symbols = rng.sample_without_replacement<Token>(alphabet.language_symbols, static_cast<std::size_t>(m));
    auto chosen = rng.sample_without_replacement<StateId>(targets, static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) dfa.set_target(s, symbols[static_cast<std::size_t>(k)], chosen[static_cast<std::size_t>(k)]);
    dfa.set_accepting(s, s != 0);
    degrees.push_back(m);
  }
  return {std::move(dfa), std::move(alphabet), n, std::move(degrees)};
}

namespace {

// BFS order from start over ascending symbols; returns old -> new ids.
std::vector<StateId> bfs_labels(const Dfa& dfa) {
  std::vector<StateId> label(static_cast<std::size_t>(dfa.num_states()), kNoState);
  std::deque<StateId> queue{dfa.start()};
  label[static_cast<std::size_t>(dfa.start())] = 0;
  StateId next = 1;
  while (!queue.empty()) {
    const StateId s = queue.front();
    queue.pop_front();
    for (Token x = 0; x < kGlobalSymbols; ++x) {
      const StateId t = dfa.target(s, x);
      if (label[static_cast<std::size_t>(t)] == kNoState) {
        label[static_cast<std::size_t>(t)] = next++;
        queue.push_back(t);
      }
    }
  }
  return label;
}

Dfa relabel(const Dfa& dfa, const std::vector<StateId>& label) {
  const int count = static_cast<int>(std::count_if(label.begin(), label.end(), [](StateId l) { return l != kNoState; }));
  const StateId sink = dfa.sink() == kNoState ? kNoState : label[static_cast<std::size_t>(dfa.sink())];
  Dfa out(count, label[static_cast<std::size_t>(dfa.start())], sink);
  for (StateId s = 0; s < dfa.num_states(); ++s) {
    const StateId ns = label[static_cast<std::size_t>(s)];
    if (ns == kNoState) continue;
    out.set_accepting(ns, dfa.accepting(s));
    for (Token x = 0; x < kGlobalSymbols; ++x) out.set_target(ns, x, label[static_cast<std::size_t>(dfa.target(s, x))]);
  }
  return out;
}

}  // namespace

Dfa canonicalize(const Dfa& dfa) { return relabel(dfa, bfs_labels(dfa)); }

Minimization minimize_with_map(const Dfa& dfa) {
  // Restrict to the reachable part first.
  const std::vector<StateId> reach = bfs_labels(dfa);
  const Dfa r = relabel(dfa, reach);
  const int n = r.num_states();

  // inverse[x][t] = states s with s --x--> t
  std::vector<std::vector<std::vector<StateId>>> inverse(
      kGlobalSymbols, std::vector<std::vector<StateId>>(static_cast<std::size_t>(n)));
  for (StateId s = 0; s < n; ++s)
    for (Token x = 0; x < kGlobalSymbols; ++x)
      inverse[static_cast<std::size_t>(x)][static_cast<std::size_t>(r.target(s, x))].push_back(s);

  std::vector<std::vector<StateId>> blocks;
  std::vector<int> block_of(static_cast<std::size_t>(n));
  {
    std::vector<StateId> acc, rej;
    for (StateId s = 0; s < n; ++s) (r.accepting(s) ? acc : rej).push_back(s);
    for (auto* b : {&acc, &rej}) {
      if (b->empty()) continue;
      for (StateId s : *b) block_of[static_cast<std::size_t>(s)] = static_cast<int>(blocks.size());
      blocks.push_back(std::move(*b));
    }
  }

  std::vector<std::uint8_t> in_work(blocks.size(), 0);
  std::vector<int> work;
  if (blocks.size() == 2) {
    const int smaller = blocks[0].size() <= blocks[1].size() ? 0 : 1;
    work.push_back(smaller);
    in_work[static_cast<std::size_t>(smaller)] = 1;
  }

  std::vector<std::uint8_t> marked(static_cast<std::size_t>(n), 0);
  std::vector<int> hit_count;
  while (!work.empty()) {
    const int splitter = work.back();
    work.pop_back();
    in_work[static_cast<std::size_t>(splitter)] = 0;
    const std::vector<StateId> splitter_states = blocks[static_cast<std::size_t>(splitter)];

    for (Token x = 0; x < kGlobalSymbols; ++x) {
      std::vector<StateId> pre;
      for (StateId t : splitter_states)
        for (StateId s : inverse[static_cast<std::size_t>(x)][static_cast<std::size_t>(t)])
          if (!marked[static_cast<std::size_t>(s)]) {
            marked[static_cast<std::size_t>(s)] = 1;
            pre.push_back(s);
          }
      if (pre.empty()) continue;

      hit_count.assign(blocks.size(), 0);
      std::vector<int> touched;
      for (StateId s : pre) {
        const int b = block_of[static_cast<std::size_t>(s)];
        if (hit_count[static_cast<std::size_t>(b)]++ == 0) touched.push_back(b);
      }
      std::sort(touched.begin(), touched.end());
      for (int b : touched) {
        auto& members = blocks[static_cast<std::size_t>(b)];
        if (hit_count[static_cast<std::size_t>(b)] == static_cast<int>(members.size())) continue;
        std::vector<StateId> inside, outside;
        for (StateId s : members) (marked[static_cast<std::size_t>(s)] ? inside : outside).push_back(s);
        const int fresh = static_cast<int>(blocks.size());
        members = std::move(inside);
        for (StateId s : outside) block_of[static_cast<std::size_t>(s)] = fresh;
        blocks.push_back(std::move(outside));
        in_work.push_back(0);
        if (in_work[static_cast<std::size_t>(b)]) {
          work.push_back(fresh);
          in_work[static_cast<std::size_t>(fresh)] = 1;
        } else {
          const int add = blocks[static_cast<std::size_t>(b)].size() <= blocks[static_cast<std::size_t>(fresh)].size() ? b : fresh;
          work.push_back(add);
          in_work[static_cast<std::size_t>(add)] = 1;
        }
      }
      for (StateId s : pre) marked[static_cast<std::size_t>(s)] = 0;
    }
  }

  const StateId sink = r.sink() == kNoState ? kNoState : block_of[static_cast<std::size_t>(r.sink())];
  Dfa quotient(static_cast<int>(blocks.size()), block_of[static_cast<std::size_t>(r.start())], sink);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const StateId rep = blocks[b].front();
    const auto qb = static_cast<StateId>(b);
    quotient.set_accepting(qb, r.accepting(rep));
    for (Token x = 0; x < kGlobalSymbols; ++x)
      quotient.set_target(qb, x, block_of[static_cast<std::size_t>(r.target(rep, x))]);
  }

  const std::vector<StateId> canon = bfs_labels(quotient);
  Minimization result{relabel(quotient, canon), std::vector<StateId>(static_cast<std::size_t>(dfa.num_states()), kNoState)};
  for (StateId s = 0; s < dfa.num_states(); ++s) {
    const StateId rs = reach[static_cast<std::size_t>(s)];
    if (rs == kNoState) continue;
    result.class_of[static_cast<std::size_t>(s)] = canon[static_cast<std::size_t>(block_of[static_cast<std::size_t>(rs)])];
  }
  return result;
}

Dfa minimize(const Dfa& dfa) { return minimize_with_map(dfa).dfa; }

std::uint64_t canonical_hash(const Dfa& dfa) {
  const Dfa c = canonicalize(dfa);
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  auto feed = [&h](std::uint64_t v) { h = Rng::mix64(h ^ (v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2))); };
  feed(static_cast<std::uint64_t>(c.num_states()));
  feed(static_cast<std::uint64_t>(c.start()));
  feed(static_cast<std::uint64_t>(static_cast<std::int64_t>(c.sink())));
  for (StateId s = 0; s < c.num_states(); ++s) {
    feed(c.accepting(s) ? 1 : 0);
    for (Token x = 0; x < kGlobalSymbols; ++x) feed(static_cast<std::uint64_t>(c.target(s, x)));
  }
  return h;
}

Pfa to_pfa(const Dfa& dfa) {
  Pfa pfa;
  pfa.dfa_ = dfa;
  pfa.probs_.assign(static_cast<std::size_t>(dfa.num_states()) * kGlobalSymbols, 0.0);
  for (StateId s = 0; s < dfa.num_states(); ++s) {
    int live = 0;
    for (Token x = 0; x < kGlobalSymbols; ++x) live += dfa.is_live_edge(s, x) ? 1 : 0;
    if (live == 0) {
      if (s == dfa.sink() && s != dfa.start()) continue;
      throw StateWithNoLiveEdge("state " + std::to_string(s) + " has no edge into a non-sink state");
    }
    const double p = 1.0 / live;
    for (Token x = 0; x < kGlobalSymbols; ++x)
      if (dfa.is_live_edge(s, x)) pfa.probs_[static_cast<std::size_t>(s) * kGlobalSymbols + static_cast<std::size_t>(x)] = p;
  }
  return pfa;
}

TokenSeq sample_string(const Pfa& pfa, const GenerationParams& params, Rng& rng) {
  const auto length = static_cast<std::size_t>(rng.uniform_int(params.len_min, params.len_max));
  TokenSeq out;
  out.reserve(length);
  StateId s = pfa.dfa().start();
  for (std::size_t i = 0; i < length; ++i) {
    const auto x = static_cast<Token>(rng.categorical(pfa.row(s)));
    out.push_back(x);
    s = pfa.dfa().target(s, x);
  }
  return out;
}

StateId run(const Pfa& pfa, std::span<const Token> symbols) {
  StateId s = pfa.dfa().start();
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const Token x = symbols[i];
    if (x < 0 || x >= kGlobalSymbols || pfa.edge_prob(s, x) <= 0.0)
      throw InvalidPrefix("symbol " + std::to_string(x) + " at offset " + std::to_string(i) +
                          " has zero probability from state " + std::to_string(s));
    s = pfa.dfa().target(s, x);
  }
  return s;
}

double stop_hazard(int length, const GenerationParams& params) {
  if (length < params.len_min) return 0.0;
  if (length >= params.len_max) return 1.0;
  return 1.0 / static_cast<double>(params.len_max - length + 1);
}

Distribution ground_truth_distribution(const Pfa& pfa, std::span<const Token> string_prefix,
                                       const GenerationParams& params) {
  const int length = static_cast<int>(string_prefix.size());
  if (length > params.len_max) throw InvalidPrefix("string prefix longer than the maximum string length");
  const StateId s = run(pfa, string_prefix);
  const double stop = stop_hazard(length, params);
  Distribution d{};
  for (Token x = 0; x < kGlobalSymbols; ++x) d[static_cast<std::size_t>(x)] = pfa.edge_prob(s, x) * (1.0 - stop);
  d[kDelimiter] = stop;
  return d;
}

std::vector<Token> valid_next_tokens(const Pfa& pfa, std::span<const Token> string_prefix,
                                     const GenerationParams& params) {
  const Distribution d = ground_truth_distribution(pfa, string_prefix, params);
  std::vector<Token> out;
  for (Token t = 0; t < kVocabSize; ++t)
    if (d[static_cast<std::size_t>(t)] > 0.0) out.push_back(t);
  return out;
}

StateId state_at(const Pfa& pfa, std::span<const Token> instance_tokens, std::size_t position) {
  if (position > instance_tokens.size()) throw InvalidPrefix("position past the end of the instance");
  StateId s = pfa.dfa().start();
  for (std::size_t i = 0; i < position; ++i) {
    const Token x = instance_tokens[i];
    if (x == kDelimiter) {
      s = pfa.dfa().start();
      continue;
    }
    if (x < 0 || x >= kGlobalSymbols || pfa.edge_prob(s, x) <= 0.0)
      throw InvalidPrefix("token " + std::to_string(x) + " at position " + std::to_string(i) +
                          " has zero probability from state " + std::to_string(s));
    s = pfa.dfa().target(s, x);
  }
  return s;
}

nlohmann::json dfa_to_json(const Dfa& dfa) {
  nlohmann::json accepting = nlohmann::json::array();
  nlohmann::json edges = nlohmann::json::array();
  for (StateId s = 0; s < dfa.num_states(); ++s) {
    accepting.push_back(dfa.accepting(s));
    for (Token x = 0; x < kGlobalSymbols; ++x)
      if (dfa.sink() == kNoState || dfa.is_live_edge(s, x)) edges.push_back({s, x, dfa.target(s, x)});
  }
  return {{"num_states", dfa.num_states()},
          {"sink", dfa.sink()},
          {"start", dfa.start()},
          {"accepting", std::move(accepting)},
          {"edges", std::move(edges)}};
}

Dfa dfa_from_json(const nlohmann::json& j) {
  const int n = j.at("num_states").get<int>();
  const auto sink = j.at("sink").get<StateId>();
  Dfa dfa(n, j.at("start").get<StateId>(), sink);
  const auto& accepting = j.at("accepting");
  if (!accepting.is_array() || static_cast<int>(accepting.size()) != n)
    throw std::invalid_argument("automaton: accepting must list one flag per state");
  for (StateId s = 0; s < n; ++s) dfa.set_accepting(s, accepting[static_cast<std::size_t>(s)].get<bool>());
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n) * kGlobalSymbols, 0);
  for (const auto& e : j.at("edges")) {
    const auto s = e.at(0).get<StateId>();
    const auto x = e.at(1).get<Token>();
    const auto t = e.at(2).get<StateId>();
    if (s < 0 || s >= n || t < 0 || t >= n || x < 0 || x >= kGlobalSymbols)
      throw std::invalid_argument("automaton: edge out of range");
    dfa.set_target(s, x, t);
    seen[static_cast<std::size_t>(s) * kGlobalSymbols + static_cast<std::size_t>(x)] = 1;
  }
  if (sink == kNoState && std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw std::invalid_argument("automaton: without a sink every edge must be listed");
  return dfa;
}

}  // namespace icll
