#include "xgkit/langid.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/utf8.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace xgkit {

using nlohmann::json;

std::vector<std::string> char_ngrams(std::string_view text) {
    const auto cps = utf8::decode(text);
    std::vector<std::string> out;
    out.reserve(cps.size() * LidModel::kMaxOrder);
    for (std::size_t i = 0; i < cps.size(); ++i) {
        std::string g;
        for (int n = 1; n <= LidModel::kMaxOrder && i + static_cast<std::size_t>(n) <= cps.size(); ++n) {
            utf8::append(g, cps[i + static_cast<std::size_t>(n) - 1]);
            out.push_back(g);
        }
    }
    return out;
}

double ascii_fraction(std::string_view text) {
    const auto cps = utf8::decode(text);
    if (cps.empty()) {
        return 0.0;
    }
    const auto ascii = std::count_if(cps.begin(), cps.end(), [](char32_t c) { return c < 128; });
    return static_cast<double>(ascii) / static_cast<double>(cps.size());
}

int LidModel::index_of(std::string_view language) const {
    const auto it = std::find(languages_.begin(), languages_.end(), language);
    return it == languages_.end() ? -1 : static_cast<int>(it - languages_.begin());
}

void LidModel::rebuild_index() {
    ngram_index_.clear();
    for (std::size_t i = 0; i < ngrams_.size(); ++i) {
        ngram_index_.emplace(ngrams_[i], i);
    }
}

Detection LidModel::detect(std::string_view text) const {
    const std::size_t L = languages_.size();
    Detection d;
    if (text.empty()) {
        d.language = "und";
        d.posterior.assign(L, 1.0 / static_cast<double>(L));
        d.flagged = true;
        return d;
    }
    std::vector<double> score(log_priors_);
    for (const auto& g : char_ngrams(text)) {
        const auto it = ngram_index_.find(g);
        if (it == ngram_index_.end()) {
            continue;
        }
        for (std::size_t l = 0; l < L; ++l) {
            score[l] += log_probs_[l][it->second];
        }
    }
    const double mx = *std::max_element(score.begin(), score.end());
    double z = 0.0;
    for (double s : score) {
        z += std::exp(s - mx);
    }
    d.posterior.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        d.posterior[l] = std::exp(score[l] - mx) / z;
    }
    const auto top = static_cast<std::size_t>(std::max_element(d.posterior.begin(), d.posterior.end()) - d.posterior.begin());
    d.language = languages_[top];
    d.confidence = d.posterior[top];
    return d;
}

double LidModel::table_log_mass(int language) const {
    const auto& t = log_probs_.at(static_cast<std::size_t>(language));
    const double mx = *std::max_element(t.begin(), t.end());
    double z = 0.0;
    for (double v : t) {
        z += std::exp(v - mx);
    }
    return mx + std::log(z);
}

LidModel train_lid(const std::map<std::string, std::vector<Document>>& corpora, int max_ngrams, std::uint64_t seed) {
    if (corpora.size() < 2) {
        throw ConfigError("language identification needs at least two languages");
    }
    if (max_ngrams < 1) {
        throw ConfigError("max_ngrams must be positive");
    }
    LidModel m;
    m.seed_ = seed;
    std::vector<std::map<std::string, long long>> counts;
    std::map<std::string, long long> totals;
    std::vector<double> doc_counts;
    for (const auto& [lang, docs] : corpora) {
        if (docs.empty()) {
            throw ConfigError("language '" + lang + "' has no documents");
        }
        m.languages_.push_back(lang);
        doc_counts.push_back(static_cast<double>(docs.size()));
        auto& c = counts.emplace_back();
        for (const auto& d : docs) {
            for (auto& g : char_ngrams(d.text)) {
                ++totals[g];
                ++c[std::move(g)];
            }
        }
    }
    std::vector<std::pair<std::string, long long>> ranked(totals.begin(), totals.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > static_cast<std::size_t>(max_ngrams)) {
        ranked.resize(static_cast<std::size_t>(max_ngrams));
    }
    std::sort(ranked.begin(), ranked.end());
    for (const auto& [g, _] : ranked) {
        m.ngrams_.push_back(g);
    }
    const double vocab = static_cast<double>(m.ngrams_.size());
    double all_docs = 0.0;
    for (double c : doc_counts) {
        all_docs += c;
    }
    for (std::size_t l = 0; l < m.languages_.size(); ++l) {
        m.log_priors_.push_back(std::log(doc_counts[l] / all_docs));
        double in_vocab = 0.0;
        for (const auto& g : m.ngrams_) {
            const auto it = counts[l].find(g);
            in_vocab += it == counts[l].end() ? 0.0 : static_cast<double>(it->second);
        }
        auto& table = m.log_probs_.emplace_back();
        table.reserve(m.ngrams_.size());
        const double denom = std::log(in_vocab + vocab);
        for (const auto& g : m.ngrams_) {
            const auto it = counts[l].find(g);
            const double c = it == counts[l].end() ? 0.0 : static_cast<double>(it->second);
            table.push_back(std::log(c + 1.0) - denom);
        }
    }
    m.rebuild_index();
    return m;
}

LidModel train_lid(const std::vector<std::pair<std::string, std::vector<Document>>>& corpora, int max_ngrams,
                   std::uint64_t seed) {
    std::map<std::string, std::vector<Document>> by_language;
    for (const auto& [lang, docs] : corpora) {
        if (!by_language.emplace(lang, docs).second) {
            throw ConfigError("language '" + lang + "' listed twice");
        }
    }
    return train_lid(by_language, max_ngrams, seed);
}

std::string LidModel::to_json() const {
    json j;
    j["format"] = "xgkit-lid-1";
    j["seed"] = seed_;
    j["languages"] = languages_;
    j["log_priors"] = log_priors_;
    j["ngrams"] = ngrams_;
    j["log_probs"] = log_probs_;
    return j.dump();
}

LidModel LidModel::from_json(std::string_view text) {
    LidModel m;
    try {
        const json j = json::parse(text);
        m.seed_ = j.at("seed").get<std::uint64_t>();
        m.languages_ = j.at("languages").get<std::vector<std::string>>();
        m.log_priors_ = j.at("log_priors").get<std::vector<double>>();
        m.ngrams_ = j.at("ngrams").get<std::vector<std::string>>();
        m.log_probs_ = j.at("log_probs").get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("language-id model: ") + e.what());
    }
    if (m.languages_.size() < 2 || m.log_priors_.size() != m.languages_.size() ||
        m.log_probs_.size() != m.languages_.size()) {
        throw FormatError("language-id model: inconsistent language tables");
    }
    for (const auto& t : m.log_probs_) {
        if (t.size() != m.ngrams_.size()) {
            throw FormatError("language-id model: table size mismatch");
        }
    }
    m.rebuild_index();
    return m;
}

void LidModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    out << to_json() << '\n';
}

LidModel LidModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

} // namespace xgkit
