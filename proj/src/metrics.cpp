#include "xgkit/metrics.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/textops.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

namespace xgkit {

PRF PRF::from(double precision, double recall) {
    PRF p{precision, recall, 0.0};
    if (precision + recall > 0.0) {
        p.f1 = 2.0 * precision * recall / (precision + recall);
    }
    return p;
}

namespace {

std::map<std::vector<int>, int> ngram_counts(std::span<const int> seq, int n) {
    std::map<std::vector<int>, int> counts;
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + un <= seq.size(); ++i) {
        ++counts[std::vector<int>(seq.begin() + static_cast<std::ptrdiff_t>(i),
                                  seq.begin() + static_cast<std::ptrdiff_t>(i + un))];
    }
    return counts;
}

// Indices into ref of one LCS with cand, using the usual backtracking order.
std::vector<std::size_t> lcs_indices(const TokenIds& ref, const TokenIds& cand) {
    const std::size_t m = ref.size();
    const std::size_t n = cand.size();
    std::vector<std::vector<int>> t(m + 1, std::vector<int>(n + 1, 0));
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            t[i][j] = ref[i - 1] == cand[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
        }
    }
    std::vector<std::size_t> idx;
    std::size_t i = m;
    std::size_t j = n;
    while (i > 0 && j > 0) {
        if (ref[i - 1] == cand[j - 1]) {
            idx.push_back(i - 1);
            --i;
            --j;
        } else if (t[i][j - 1] > t[i - 1][j]) {
            --j;
        } else {
            --i;
        }
    }
    std::reverse(idx.begin(), idx.end());
    return idx;
}

std::string strip(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n\v\f");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n\v\f");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace

PRF rouge_n(std::span<const int> ref, std::span<const int> cand, int n) {
    if (n < 1) {
        throw InputError("rouge_n needs n >= 1");
    }
    const auto rc = ngram_counts(ref, n);
    const auto cc = ngram_counts(cand, n);
    long long overlap = 0;
    long long n_ref = 0;
    long long n_cand = 0;
    for (const auto& [g, c] : rc) {
        n_ref += c;
        const auto it = cc.find(g);
        if (it != cc.end()) {
            overlap += std::min(c, it->second);
        }
    }
    for (const auto& [g, c] : cc) {
        n_cand += c;
    }
    const double p = static_cast<double>(overlap) / static_cast<double>(std::max<long long>(1, n_cand));
    const double r = static_cast<double>(overlap) / static_cast<double>(std::max<long long>(1, n_ref));
    return PRF::from(p, r);
}

PRF rouge_lsum(const std::vector<TokenIds>& ref_sents, const std::vector<TokenIds>& cand_sents) {
    std::unordered_map<int, long long> ref_left;
    std::unordered_map<int, long long> cand_left;
    long long m = 0;
    long long n = 0;
    for (const auto& s : ref_sents) {
        m += static_cast<long long>(s.size());
        for (int t : s) {
            ++ref_left[t];
        }
    }
    for (const auto& s : cand_sents) {
        n += static_cast<long long>(s.size());
        for (int t : s) {
            ++cand_left[t];
        }
    }
    if (m == 0 || n == 0) {
        return {};
    }
    long long hits = 0;
    for (const auto& r : ref_sents) {
        std::set<std::size_t> union_idx;
        for (const auto& c : cand_sents) {
            const auto idx = lcs_indices(r, c);
            union_idx.insert(idx.begin(), idx.end());
        }
        for (std::size_t i : union_idx) {
            const int t = r[i];
            auto& cl = cand_left[t];
            auto& rl = ref_left[t];
            if (cl > 0 && rl > 0) {
                ++hits;
                --cl;
                --rl;
            }
        }
    }
    return PRF::from(static_cast<double>(hits) / static_cast<double>(n), static_cast<double>(hits) / static_cast<double>(m));
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string s = strip(text.substr(start, end - start));
        if (!s.empty()) {
            out.push_back(std::move(s));
        }
        start = end + 1;
    }
    return out;
}

SpRouge sp_rouge(const SubwordModel& model, std::string_view ref, std::string_view cand) {
    std::vector<TokenIds> ref_sents;
    std::vector<TokenIds> cand_sents;
    TokenIds ref_flat;
    TokenIds cand_flat;
    for (const auto& s : split_sentences(ref)) {
        ref_sents.push_back(model.encode(s));
        ref_flat.insert(ref_flat.end(), ref_sents.back().begin(), ref_sents.back().end());
    }
    for (const auto& s : split_sentences(cand)) {
        cand_sents.push_back(model.encode(s));
        cand_flat.insert(cand_flat.end(), cand_sents.back().begin(), cand_sents.back().end());
    }
    return {rouge_n(ref_flat, cand_flat, 1), rouge_n(ref_flat, cand_flat, 2), rouge_lsum(ref_sents, cand_sents)};
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw InputError("pearson needs two equal-length lists of at least 2 values");
    }
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw UndefinedError("correlation undefined for a constant input vector");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

EvalReport corpus_eval(const std::vector<Prediction>& predictions, const std::vector<std::string>& references,
                       const SubwordModel& model, const LidModel& lid, const EvalOptions& options) {
    if (predictions.size() != references.size()) {
        throw InputError("predictions and references differ in length (" + std::to_string(predictions.size()) +
                         " vs " + std::to_string(references.size()) + ")");
    }
    const int src = lid.index_of(options.source_language);
    if (src < 0) {
        throw InputError("language '" + options.source_language + "' unknown to the language-id model");
    }
    EvalReport report;
    report.metadata.trim_applied = options.trim;
    report.metadata.tokenizer_id = model.fingerprint();
    report.metadata.checkpoint_step = options.checkpoint_step;
    report.metadata.source_language = options.source_language;
    // Accumulate sums in example order so aggregation is deterministic.
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& pred = predictions[i];
        const int tgt = lid.index_of(pred.language);
        if (tgt < 0) {
            throw InputError("language '" + pred.language + "' unknown to the language-id model");
        }
        const std::string text = options.trim ? trim_trailing_repeats(pred.text).first : pred.text;
        const SpRouge sr = sp_rouge(model, references[i], text);
        const Detection d = lid.detect(text);
        auto& s = report.per_language[pred.language];
        s.sp_rg_lsum += sr.lsum.f1;
        s.sp_rg_1 += sr.r1.f1;
        s.sp_rg_2 += sr.r2.f1;
        if (d.flagged) {
            ++report.metadata.flagged_empty;
        } else {
            s.lid_target += d.posterior[static_cast<std::size_t>(tgt)];
            s.lid_en += d.posterior[static_cast<std::size_t>(src)];
        }
        s.ascii += ascii_fraction(text);
        ++s.n;
    }
    for (auto& [lang, s] : report.per_language) {
        const double scale = 100.0 / static_cast<double>(s.n);
        s.sp_rg_lsum *= scale;
        s.sp_rg_1 *= scale;
        s.sp_rg_2 *= scale;
        s.lid_target *= scale;
        s.lid_en *= scale;
        s.ascii *= scale;
    }
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json langs = nlohmann::ordered_json::object();
    for (const auto& [lang, s] : per_language) {
        langs[lang] = {{"sp_rg_lsum", s.sp_rg_lsum}, {"sp_rg_1", s.sp_rg_1}, {"sp_rg_2", s.sp_rg_2},
                       {"lid_target", s.lid_target}, {"lid_en", s.lid_en},   {"ascii", s.ascii},
                       {"n", s.n}};
    }
    j["per_language"] = langs;
    j["metadata"] = {{"trim_applied", metadata.trim_applied},
                     {"tokenizer_id", metadata.tokenizer_id},
                     {"checkpoint_step", metadata.checkpoint_step},
                     {"sentence_split", metadata.sentence_split},
                     {"source_language", metadata.source_language},
                     {"flagged_empty", metadata.flagged_empty}};
    return j.dump(2);
}

} // namespace xgkit
