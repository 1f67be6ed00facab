#pragma once

#include "xgkit/corpus.hpp"
#include "xgkit/tokenizer.hpp"

#include <string>
#include <string_view>
#include <utility>

namespace xgkit {

struct TrimReport {
    std::size_t original_len = 0; // characters
    std::size_t trimmed_len = 0;  // characters
    std::string removed_unit;     // unit of the first removal, empty if none
    int repetitions_removed = 0;
};

// Removes all but one copy of any prediction-final repeated unit. Each pass
// takes the suffix u^k (k >= 2) that removes the most characters, (k-1)|u|,
// preferring the longer unit on ties; passes repeat until nothing changes.
std::pair<std::string, TrimReport> trim_trailing_repeats(std::string_view text);

inline constexpr int kDefaultLeadTokens = 64;

// Lead-n baseline: the first n subword tokens of the document, decoded.
std::string lead_n(const SummExample& ex, const SubwordModel& model, int n = kDefaultLeadTokens);

} // namespace xgkit
