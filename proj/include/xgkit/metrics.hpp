#pragma once

#include "xgkit/langid.hpp"
#include "xgkit/tokenizer.hpp"

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xgkit {

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    static PRF from(double precision, double recall);
};

PRF rouge_n(std::span<const int> ref, std::span<const int> cand, int n);

// Summary-level ROUGE-L: per reference sentence, the union of LCS hits
// against every candidate sentence; hits are clipped by token counts so a
// candidate token is credited at most once.
PRF rouge_lsum(const std::vector<TokenIds>& ref_sents, const std::vector<TokenIds>& cand_sents);

struct SpRouge {
    PRF r1;
    PRF r2;
    PRF lsum;
};

// Sentences are newline separated; each is stripped of surrounding
// whitespace and empty ones are dropped before tokenization.
std::vector<std::string> split_sentences(std::string_view text);
SpRouge sp_rouge(const SubwordModel& model, std::string_view ref, std::string_view cand);

double pearson(std::span<const double> xs, std::span<const double> ys);

struct LanguageScores {
    double sp_rg_lsum = 0.0;
    double sp_rg_1 = 0.0;
    double sp_rg_2 = 0.0;
    double lid_target = 0.0;
    double lid_en = 0.0;
    double ascii = 0.0;
    std::size_t n = 0;
};

struct EvalMetadata {
    bool trim_applied = false;
    std::string tokenizer_id;
    long long checkpoint_step = -1;
    std::string sentence_split = "newline";
    std::string source_language = "en";
    std::size_t flagged_empty = 0;
};

struct EvalReport {
    std::map<std::string, LanguageScores> per_language;
    EvalMetadata metadata;

    std::string to_json() const;
};

struct Prediction {
    std::string text;
    std::string language;
};

struct EvalOptions {
    bool trim = true;
    std::string source_language = "en";
    long long checkpoint_step = -1;
};

// Per example: optional trailing-repeat trim, SP-Rouge against the
// reference, LID posterior for the target and source languages, ASCII
// fraction. All scores are means scaled by 100.
EvalReport corpus_eval(const std::vector<Prediction>& predictions, const std::vector<std::string>& references,
                       const SubwordModel& model, const LidModel& lid, const EvalOptions& options = {});

} // namespace xgkit
