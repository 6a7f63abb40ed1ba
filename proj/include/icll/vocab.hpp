#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace icll {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

// Shared symbol set: ids 0..17 are language symbols, 18 is the string
// delimiter. Every next-token distribution in the toolkit is a row over
// these 19 ids.
inline constexpr int kGlobalSymbols = 18;
inline constexpr Token kDelimiter = kGlobalSymbols;
inline constexpr int kVocabSize = kGlobalSymbols + 1;

using Distribution = std::array<double, kVocabSize>;

inline Distribution uniform_distribution() {
  Distribution d;
  d.fill(1.0 / kVocabSize);
  return d;
}

}  // namespace icll
