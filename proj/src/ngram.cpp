#include "icll/ngram.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace icll::ngram {

namespace {
constexpr std::uint64_t kBase = kVocabSize + 1;  // symbols, delimiter, pad
}

NgramTable::NgramTable(int order) : order_(order) {
  if (order < 1 || order > kMaxOrder)
    throw std::invalid_argument("NgramTable: order must lie in [1, " + std::to_string(kMaxOrder) + "]");
}

std::uint64_t NgramTable::encode(std::span<const Token> context) {
  std::uint64_t value = 0;
  for (Token t : context) value = value * kBase + static_cast<std::uint64_t>(t);
  return (static_cast<std::uint64_t>(context.size()) << 56) | value;
}

TokenSeq NgramTable::decode(std::uint64_t key) {
  const auto len = static_cast<std::size_t>(key >> 56);
  std::uint64_t value = key & ((std::uint64_t{1} << 56) - 1);
  TokenSeq out(len);
  for (std::size_t i = len; i-- > 0;) {
    out[i] = static_cast<Token>(value % kBase);
    value /= kBase;
  }
  return out;
}

TokenSeq NgramTable::context_of(std::span<const Token> partial) const {
  const auto width = static_cast<std::size_t>(order_ - 1);
  TokenSeq ctx(width, kPad);
  const std::size_t take = std::min(width, partial.size());
  std::copy(partial.end() - static_cast<std::ptrdiff_t>(take), partial.end(),
            ctx.end() - static_cast<std::ptrdiff_t>(take));
  return ctx;
}

void NgramTable::add_event(std::span<const Token> history, Token next) {
  const TokenSeq ctx = context_of(history);
  for (std::size_t k = 0; k < ctx.size() + 1; ++k) {
    ContextRow& row = rows_[encode(std::span<const Token>(ctx).last(k))];
    ++row.counts[static_cast<std::size_t>(next)];
    ++row.total;
  }
}

void NgramTable::add_string(std::span<const Token> symbols, bool complete) {
  for (std::size_t p = 0; p < symbols.size(); ++p) add_event(symbols.first(p), symbols[p]);
  if (complete) add_event(symbols, kDelimiter);
}

const ContextRow* NgramTable::find(std::span<const Token> context) const {
  auto it = rows_.find(encode(context));
  return it == rows_.end() ? nullptr : &it->second;
}

std::uint32_t NgramTable::count(std::span<const Token> context, Token next) const {
  if (next < 0 || next >= kVocabSize) return 0;
  const ContextRow* row = find(context);
  return row ? row->counts[static_cast<std::size_t>(next)] : 0;
}

std::uint32_t NgramTable::context_total(std::span<const Token> context) const {
  const ContextRow* row = find(context);
  return row ? row->total : 0;
}

NgramTable build_table(std::span<const Token> prefix_tokens, int order) {
  NgramTable table(order);
  std::size_t begin = 0;
  for (std::size_t i = 0; i < prefix_tokens.size(); ++i) {
    if (prefix_tokens[i] != kDelimiter) continue;
    table.add_string(prefix_tokens.subspan(begin, i - begin), true);
    begin = i + 1;
  }
  table.add_string(prefix_tokens.subspan(begin), false);
  return table;
}

Distribution next_token_distribution(const NgramTable& table, std::span<const Token> context) {
  if (context.size() != static_cast<std::size_t>(table.order() - 1))
    throw std::invalid_argument("next_token_distribution: context must hold order-1 tokens");
  Distribution dist = uniform_distribution();
  for (std::size_t k = 0; k < context.size() + 1; ++k) {
    const ContextRow* row = table.find(context.last(k));
    if (row == nullptr || row->total == 0) continue;
    const double c = row->total;
    double unseen_mass = 0.0;
    for (std::size_t w = 0; w < kVocabSize; ++w)
      if (row->counts[w] == 0) unseen_mass += dist[w];
    Distribution next{};
    if (unseen_mass > 0.0) {
      const double alpha = (1.0 / (c + 1.0)) / unseen_mass;
      for (std::size_t w = 0; w < kVocabSize; ++w)
        next[w] = row->counts[w] > 0 ? row->counts[w] / (c + 1.0) : alpha * dist[w];
    } else {
      // Every continuation observed: no room for escape mass.
      for (std::size_t w = 0; w < kVocabSize; ++w) next[w] = row->counts[w] / c;
    }
    dist = next;
  }
  return dist;
}

std::span<const Token> trailing_string(std::span<const Token> prefix_tokens) {
  auto it = std::find(prefix_tokens.rbegin(), prefix_tokens.rend(), kDelimiter);
  return prefix_tokens.last(static_cast<std::size_t>(it - prefix_tokens.rbegin()));
}

PredictionTrace predict_instance(const ProblemInstance& instance, int order) {
  PredictionTrace trace{instance.id, {}};
  trace.probs.reserve(instance.tokens.size());
  NgramTable table(order);
  TokenSeq partial;
  for (Token t : instance.tokens) {
    trace.probs.push_back(next_token_distribution(table, table.context_of(partial)));
    table.add_event(partial, t);
    if (t == kDelimiter)
      partial.clear();
    else
      partial.push_back(t);
  }
  return trace;
}

CountQuery query_counts(std::span<const Token> prefix_tokens, std::span<const Token> context, Token next) {
  const NgramTable table = build_table(prefix_tokens, static_cast<int>(context.size()) + 1);
  CountQuery q;
  q.count = table.count(context, next);
  const std::uint32_t total = table.context_total(context);
  q.frequency = total > 0 ? static_cast<double>(q.count) / total : 0.0;
  q.exists = q.count > 0;
  return q;
}

}  // namespace icll::ngram
