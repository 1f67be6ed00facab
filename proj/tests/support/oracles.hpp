#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Written from the metric definitions, not from the library code.

#include "naive_transformer.hpp"

#include "xgkit/random.hpp"
#include "xgkit/tokenizer.hpp"
#include "xgkit/utf8.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

struct Scores {
    double p = 0.0;
    double r = 0.0;
    double f = 0.0;
};

inline Scores prf(double hits, double n_cand, double n_ref) {
    Scores s;
    s.p = n_cand > 0 ? hits / n_cand : 0.0;
    s.r = n_ref > 0 ? hits / n_ref : 0.0;
    s.f = s.p + s.r > 0 ? 2.0 * s.p * s.r / (s.p + s.r) : 0.0;
    return s;
}

// Clipped n-gram overlap by brute force: every candidate n-gram looks for an
// unused matching reference n-gram.
inline Scores rouge_n(const std::vector<int>& ref, const std::vector<int>& cand, int n) {
    auto grams = [n](const std::vector<int>& s) {
        std::vector<std::vector<int>> g;
        for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
            g.emplace_back(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i) + n);
        }
        return g;
    };
    const auto rg = grams(ref);
    const auto cg = grams(cand);
    std::vector<bool> used(rg.size(), false);
    double hits = 0;
    for (const auto& g : cg) {
        for (std::size_t j = 0; j < rg.size(); ++j) {
            if (!used[j] && rg[j] == g) {
                used[j] = true;
                hits += 1;
                break;
            }
        }
    }
    return prf(hits, static_cast<double>(cg.size()), static_cast<double>(rg.size()));
}

// LCS by memoized recursion over prefix lengths, then the standard
// backtrack: take a match, else step in the candidate only when that side
// is strictly longer.
inline std::vector<std::size_t> lcs_hits(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<std::size_t, std::size_t>, int> memo;
    std::function<int(std::size_t, std::size_t)> L = [&](std::size_t i, std::size_t j) -> int {
        if (i == 0 || j == 0) {
            return 0;
        }
        const auto key = std::make_pair(i, j);
        if (auto it = memo.find(key); it != memo.end()) {
            return it->second;
        }
        const int v = a[i - 1] == b[j - 1] ? L(i - 1, j - 1) + 1 : std::max(L(i - 1, j), L(i, j - 1));
        memo[key] = v;
        return v;
    };
    std::vector<std::size_t> hits;
    std::size_t i = a.size();
    std::size_t j = b.size();
    while (i > 0 && j > 0) {
        if (a[i - 1] == b[j - 1]) {
            hits.insert(hits.begin(), i - 1);
            --i;
            --j;
        } else if (L(i, j - 1) > L(i - 1, j)) {
            --j;
        } else {
            --i;
        }
    }
    return hits;
}

// Summary-level LCS: per reference sentence, union of LCS hit positions over
// all candidate sentences; a token is credited only while both sides still
// have an unused copy of it.
inline Scores rouge_lsum(const std::vector<std::vector<int>>& refs, const std::vector<std::vector<int>>& cands) {
    std::map<int, int> ref_count;
    std::map<int, int> cand_count;
    double m = 0;
    double n = 0;
    for (const auto& s : refs) {
        m += static_cast<double>(s.size());
        for (int t : s) ++ref_count[t];
    }
    for (const auto& s : cands) {
        n += static_cast<double>(s.size());
        for (int t : s) ++cand_count[t];
    }
    if (m == 0 || n == 0) {
        return {};
    }
    double hits = 0;
    for (const auto& r : refs) {
        std::vector<bool> in_union(r.size(), false);
        for (const auto& c : cands) {
            for (std::size_t i : lcs_hits(r, c)) in_union[i] = true;
        }
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (in_union[i] && ref_count[r[i]] > 0 && cand_count[r[i]] > 0) {
                hits += 1;
                --ref_count[r[i]];
                --cand_count[r[i]];
            }
        }
    }
    return prf(hits, n, m);
}

// Textbook single-pass formula.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (std::sqrt(n * sxx - sx * sx) * std::sqrt(n * syy - sy * sy));
}

// Best complete output under logprob / ((5 + |y|) / 6)^alpha by listing
// every sequence: those ending in EOS (any length up to max_len) and those
// that reach max_len without it. Ties go to the smaller sequence.
inline std::vector<int> exhaustive_decode(const xgkit::Backbone& bb, const naive::Matrix& prompt,
                                          const std::vector<int>& inputs, int max_len, double alpha) {
    const int vocab = bb.config().vocab_size;
    std::vector<std::vector<int>> all;
    std::vector<std::vector<int>> frontier{{}};
    for (int len = 1; len <= max_len; ++len) {
        std::vector<std::vector<int>> next;
        for (const auto& pre : frontier) {
            for (int v = 0; v < vocab; ++v) {
                auto s = pre;
                s.push_back(v);
                if (v == xgkit::kEosId || len == max_len) {
                    all.push_back(s);
                }
                if (v != xgkit::kEosId) {
                    next.push_back(s);
                }
            }
        }
        frontier = std::move(next);
    }
    const std::vector<int>* best = nullptr;
    double best_score = 0.0;
    for (const auto& s : all) {
        const double lp = std::pow((5.0 + static_cast<double>(s.size())) / 6.0, alpha);
        const double score = naive::sequence_logprob(bb, prompt, inputs, s) / lp;
        if (best == nullptr || score > best_score || (score == best_score && s < *best)) {
            best = &s;
            best_score = score;
        }
    }
    std::vector<int> out = *best;
    if (!out.empty() && out.back() == xgkit::kEosId) {
        out.pop_back();
    }
    return out;
}

// Random text mixing ASCII, Latin-1, Cyrillic, CJK, emoji, the space marker
// U+2581 and whitespace, for round-trip style checks.
inline std::string random_unicode(xgkit::Rng& rng, int max_len = 40) {
    static const std::vector<std::pair<char32_t, char32_t>> ranges = {
        {0x20, 0x7E}, {0xA0, 0xFF}, {0x400, 0x44F}, {0x4E00, 0x4E80}, {0x1F600, 0x1F64F}, {0x2581, 0x2581},
        {0x09, 0x0A}, {0x20, 0x20}, {0x10000, 0x10FFFF}, {0xE000, 0xF8FF}};
    const auto len = rng.uniform_int(0, max_len);
    std::vector<char32_t> cps;
    for (std::int64_t i = 0; i < len; ++i) {
        const auto& r = ranges[rng.below(ranges.size())];
        char32_t c = static_cast<char32_t>(rng.uniform_int(r.first, r.second));
        if (c >= 0xD800 && c <= 0xDFFF) {
            c = U'x';
        }
        cps.push_back(c);
    }
    return xgkit::utf8::encode(cps);
}

// Trailing-repeat fixtures: input, expected output.
inline const std::vector<std::pair<std::string, std::string>>& trim_fixtures() {
    static const std::vector<std::pair<std::string, std::string>> f = {
        {"abcxyxyxy", "abcxy"},
        {"abab", "ab"},
        {"abc", "abc"},
        {"", ""},
        {"a", "a"},
        {"aaaa", "a"},
        {"hello world world world", "hello world"},
        {"the cat. the cat. the cat. ", "the cat. "},
        {"xyzzy", "xyzzy"},
        {"abcabcabcd", "abcabcabcd"},
        {"ab ab ab ", "ab "},
        {"мир мир мир", "мир мир"},
        {"да да да ", "да "},
        {"no repeats here", "no repeats here"},
        {"aab aab", "aab aab"},
        {"😀😀😀", "😀"},
    };
    return f;
}

// Hand-counted ASCII fractions: text, ascii characters / all characters.
inline const std::vector<std::pair<std::string, double>>& ascii_fixtures() {
    static const std::vector<std::pair<std::string, double>> f = {
        {"hello", 1.0},       {"мир", 0.0},      {"ab мир", 0.5}, {"x\xC3\xA9", 0.5},
        {"1 2 3 д", 6.0 / 7.0}, {"😀a", 0.5}, {"", 0.0},
    };
    return f;
}

} // namespace oracle
