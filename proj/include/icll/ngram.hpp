#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "icll/dataset.hpp"
#include "icll/metrics.hpp"

namespace icll::ngram {

// Left padding inside the table. Never a continuation, never in an output row.
inline constexpr Token kPad = kVocabSize;
inline constexpr int kMaxOrder = 12;

struct ContextRow {
  std::array<std::uint32_t, kVocabSize> counts{};  // continuation counts; delimiter slot = end of string
  std::uint32_t total = 0;
};

/// Per-context continuation counts over an in-context corpus of strings, each
/// left-padded with order-1 pad tokens. Complete strings end with an end event
/// (recorded under the delimiter id); a trailing partial string does not.
class NgramTable {
 public:
  explicit NgramTable(int order);

  int order() const { return order_; }

  /// Adds one string. `complete` appends the end event.
  void add_string(std::span<const Token> symbols, bool complete);

  /// Counts `next` as the continuation of `history`, the partial string that
  /// precedes it (only its last order-1 tokens matter).
  void add_event(std::span<const Token> history, Token next);

  const ContextRow* find(std::span<const Token> context) const;
  std::uint32_t count(std::span<const Token> context, Token next) const;
  std::uint32_t context_total(std::span<const Token> context) const;

  std::size_t num_contexts() const { return rows_.size(); }

  template <typename Fn>
  void for_each_context(Fn&& fn) const {
    for (const auto& [key, row] : rows_) fn(decode(key), row);
  }

  /// The order-1 tokens preceding the next continuation of `partial`,
  /// left-padded.
  TokenSeq context_of(std::span<const Token> partial) const;

  static std::uint64_t encode(std::span<const Token> context);
  static TokenSeq decode(std::uint64_t key);

 private:
  int order_;
  std::unordered_map<std::uint64_t, ContextRow> rows_;
};

/// Table over x_{1:i-1}: the prefix is split on the delimiter, every piece but
/// the last is a complete string.
NgramTable build_table(std::span<const Token> prefix_tokens, int order);

/// Backoff distribution for the next token after `context` (the padded
/// order-1 tokens from NgramTable::context_of). Each populated level keeps
/// c(ctx w)/(c(ctx)+1) for seen continuations and spreads the remaining
/// 1/(c(ctx)+1) over unseen ones in proportion to the next lower level; a
/// context with no counts defers to the lower level entirely. The base level
/// is uniform over all 19 vocabulary ids.
Distribution next_token_distribution(const NgramTable& table, std::span<const Token> context);

/// Partial string (tokens after the last delimiter) of a prefix.
std::span<const Token> trailing_string(std::span<const Token> prefix_tokens);

PredictionTrace predict_instance(const ProblemInstance& instance, int order);

struct CountQuery {
  std::uint32_t count = 0;
  double frequency = 0.0;
  bool exists = false;
};

/// Count of `context` followed by `next` in the padded in-context corpus of
/// the prefix, its relative frequency among continuations of `context`, and
/// whether it occurred.
CountQuery query_counts(std::span<const Token> prefix_tokens, std::span<const Token> context, Token next);

}  // namespace icll::ngram
