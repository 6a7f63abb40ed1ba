#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "icll/rng.hpp"
#include "icll/vocab.hpp"

namespace icll {

using StateId = std::int32_t;
inline constexpr StateId kNoState = -1;

struct GenerationParams {
  int n_min = 4, n_max = 12;             // states, excluding the reject state
  int c_min = 4, c_max = 18;             // language alphabet size
  int m_min = 1, m_max = 4;              // sampled out-edges per state
  int len_min = 1, len_max = 50;         // symbols per string
  int strings_min = 10, strings_max = 20;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on inverted or out-of-domain ranges.
  void validate() const;
};

struct Alphabet {
  std::vector<Token> language_symbols;  // ascending global ids

  bool contains(Token t) const;
};

/// Deterministic automaton over the full global symbol set. The transition
/// table is total: every (state, symbol) pair has exactly one target.
class Dfa {
 public:
  Dfa() = default;
  Dfa(int num_states, StateId start, StateId sink);

  int num_states() const { return num_states_; }
  StateId start() const { return start_; }
  StateId sink() const { return sink_; }

  StateId target(StateId s, Token symbol) const { return table_[index(s, symbol)]; }
  void set_target(StateId s, Token symbol, StateId t) { table_[index(s, symbol)] = t; }

  bool accepting(StateId s) const { return accepting_[static_cast<std::size_t>(s)] != 0; }
  void set_accepting(StateId s, bool a) { accepting_[static_cast<std::size_t>(s)] = a ? 1 : 0; }

  /// Target is a state other than the sink.
  bool is_live_edge(StateId s, Token symbol) const { return target(s, symbol) != sink_; }

  bool operator==(const Dfa&) const = default;

 private:
  std::size_t index(StateId s, Token symbol) const {
    return static_cast<std::size_t>(s) * kGlobalSymbols + static_cast<std::size_t>(symbol);
  }

  int num_states_ = 0;
  StateId start_ = 0;
  StateId sink_ = kNoState;
  std::vector<StateId> table_;
  std::vector<std::uint8_t> accepting_;
};

/// Uniform-transition probabilistic view of a minimized Dfa.
class Pfa {
 public:
  Pfa() = default;

  const Dfa& dfa() const { return dfa_; }
  double edge_prob(StateId s, Token symbol) const {
    return probs_[static_cast<std::size_t>(s) * kGlobalSymbols + static_cast<std::size_t>(symbol)];
  }
  std::span<const double> row(StateId s) const {
    return {probs_.data() + static_cast<std::size_t>(s) * kGlobalSymbols, kGlobalSymbols};
  }

  bool operator==(const Pfa&) const = default;

 private:
  friend Pfa to_pfa(const Dfa& dfa);
  Dfa dfa_;
  std::vector<double> probs_;
};

struct StateWithNoLiveEdge : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidPrefix : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A raw sampled automaton together with the alphabet it was drawn over.
struct SampledAutomaton {
  Dfa dfa;
  Alphabet alphabet;
  int num_states_sampled = 0;  // n, excluding the reject state
  std::vector<int> out_degrees;  // m_i per state, index 0 is the reject/start state
};

/// Samples the un-minimized automaton: states 0..n with state 0 serving as
/// both start and reject target, every state gets m_i edges with distinct
/// symbols from the language alphabet and distinct targets among 1..n
/// (excluding itself), and every other (state, symbol) pair rejects.
SampledAutomaton sample_dfa(const GenerationParams& params, Rng& rng);

struct Minimization {
  Dfa dfa;
  std::vector<StateId> class_of;  // input state -> output state, kNoState if unreachable
};

/// Hopcroft minimization followed by canonical relabelling.
Minimization minimize_with_map(const Dfa& dfa);
Dfa minimize(const Dfa& dfa);

/// Relabels reachable states in BFS order from start, visiting symbols in
/// ascending order; unreachable states are dropped.
Dfa canonicalize(const Dfa& dfa);

/// 64-bit digest of the canonical form.
std::uint64_t canonical_hash(const Dfa& dfa);

Pfa to_pfa(const Dfa& dfa);

TokenSeq sample_string(const Pfa& pfa, const GenerationParams& params, Rng& rng);

/// State reached from start by consuming `symbols`; throws InvalidPrefix on a
/// zero-probability edge.
StateId run(const Pfa& pfa, std::span<const Token> symbols);

/// Probability that a string stops after exactly `length` symbols given that it
/// reached that length, for the uniform length prior of `params`.
double stop_hazard(int length, const GenerationParams& params);

/// Next-token distribution under the language given the partial string since
/// the last delimiter.
Distribution ground_truth_distribution(const Pfa& pfa, std::span<const Token> string_prefix,
                                       const GenerationParams& params = {});

std::vector<Token> valid_next_tokens(const Pfa& pfa, std::span<const Token> string_prefix,
                                     const GenerationParams& params = {});

/// State after consuming tokens[0, position), restarting at the start state
/// after each delimiter.
StateId state_at(const Pfa& pfa, std::span<const Token> instance_tokens, std::size_t position);

nlohmann::json dfa_to_json(const Dfa& dfa);
Dfa dfa_from_json(const nlohmann::json& j);

}  // namespace icll
