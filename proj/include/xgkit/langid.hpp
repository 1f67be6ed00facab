#pragma once

#include "xgkit/corpus.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xgkit {

struct Detection {
    std::string language; // "und" when the text is empty
    double confidence = 0.0;
    std::vector<double> posterior; // aligned with LidModel::languages()
    bool flagged = false;
};

// Multinomial naive Bayes over character 1-, 2- and 3-grams with add-one
// smoothing. N-grams outside the vocabulary contribute nothing.
class LidModel {
public:
    static constexpr int kMaxOrder = 3;

    const std::vector<std::string>& languages() const { return languages_; }
    int index_of(std::string_view language) const; // -1 if unknown
    bool knows(std::string_view language) const { return index_of(language) >= 0; }
    std::size_t vocabulary_size() const { return ngrams_.size(); }

    Detection detect(std::string_view text) const;

    std::string to_json() const;
    static LidModel from_json(std::string_view text);
    void save(const std::string& path) const;
    static LidModel load(const std::string& path);

    // log-sum-exp of one language's table; 0 up to rounding.
    double table_log_mass(int language) const;

private:
    friend LidModel train_lid(const std::map<std::string, std::vector<Document>>& corpora, int max_ngrams,
                              std::uint64_t seed);
    void rebuild_index();

    std::vector<std::string> languages_;
    std::vector<double> log_priors_;
    std::vector<std::string> ngrams_;
    std::vector<std::vector<double>> log_probs_; // [language][ngram]
    std::unordered_map<std::string, std::size_t> ngram_index_;
    std::uint64_t seed_ = 0;
};

// Vocabulary = the max_ngrams most frequent n-grams over all corpora
// (ties broken by byte order), so training is deterministic.
LidModel train_lid(const std::map<std::string, std::vector<Document>>& corpora, int max_ngrams, std::uint64_t seed);

// Same, from an ordered list; a language listed twice is a configuration error.
LidModel train_lid(const std::vector<std::pair<std::string, std::vector<Document>>>& corpora, int max_ngrams,
                   std::uint64_t seed);

std::vector<std::string> char_ngrams(std::string_view text);

double ascii_fraction(std::string_view text);

} // namespace xgkit
