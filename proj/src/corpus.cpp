#include "xgkit/corpus.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/random.hpp"
#include "xgkit/utf8.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace xgkit {

using nlohmann::json;

namespace {

// Zipf-weighted sampling over the lexicon, weight 1/(rank+1).
class LexiconSampler {
public:
    LexiconSampler() {
        const auto& lex = base_lexicon();
        double total = 0.0;
        for (std::size_t r = 0; r < lex.size(); ++r) {
            total += 1.0 / static_cast<double>(r + 1);
            cumulative_.push_back(total);
        }
        for (double& c : cumulative_) {
            c /= total;
        }
    }

    const std::string& draw(Rng& rng) const {
        const double u = rng.uniform01();
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
        return base_lexicon()[idx];
    }

private:
    std::vector<double> cumulative_;
};

const LexiconSampler& sampler() {
    static const LexiconSampler s;
    return s;
}

std::string trim_ws(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

void check_malformed(std::size_t skipped, std::size_t total, const std::string& path) {
    if (total > 0 && static_cast<double>(skipped) > 0.1 * static_cast<double>(total)) {
        throw FormatError(path + ": " + std::to_string(skipped) + " of " + std::to_string(total) +
                          " lines malformed (more than 10%)");
    }
}

template <class T, class Parse>
LoadResult<T> load_jsonl(const std::string& path, Parse parse) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path);
    }
    LoadResult<T> result;
    std::size_t total = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (trim_ws(line).empty()) {
            continue;
        }
        ++total;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            ++result.skipped;
            continue;
        }
        if (auto rec = parse(j)) {
            result.records.push_back(std::move(*rec));
        } else {
            ++result.skipped;
        }
    }
    check_malformed(result.skipped, total, path);
    return result;
}

std::optional<std::string> string_field(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        return std::nullopt;
    }
    return it->get<std::string>();
}

} // namespace

const std::vector<std::string>& base_lexicon() {
    static const std::vector<std::string> lex = {
        "the", "of", "and", "to", "in", "is", "you", "that", "it", "he", "was", "for",
        "on", "are", "as", "with", "his", "they", "at", "be", "this", "have", "from", "or",
        "one", "had", "by", "word", "but", "not", "what", "all", "were", "we", "when", "your",
        "can", "said", "there", "use", "each", "which", "she", "do", "how", "their", "if", "will",
    };
    return lex;
}

bool is_shared_character(char32_t c) {
    return c == U' ' || c == U'.' || (c >= U'0' && c <= U'9');
}

bool is_base_grammar_text(std::string_view text) {
    const auto& lex = base_lexicon();
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find(' ', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        const std::string_view word = text.substr(start, end - start);
        const bool number = !word.empty() && std::all_of(word.begin(), word.end(), [](char c) { return c >= '0' && c <= '9'; });
        if (!(word == "." || number || std::find(lex.begin(), lex.end(), word) != lex.end())) {
            return false;
        }
        start = end + 1;
    }
    return true;
}

void SynthLangSpec::validate() const {
    if (name.empty() || family.empty()) {
        throw ConfigError("language spec needs a name and a family");
    }
    std::set<char32_t> seen;
    for (char32_t c : cipher) {
        if (c < script_block_start || c > script_block_end()) {
            throw ConfigError("cipher of '" + name + "' leaves its script block");
        }
        if (is_shared_character(c)) {
            throw ConfigError("cipher of '" + name + "' maps onto a shared character");
        }
        if (!seen.insert(c).second) {
            throw ConfigError("cipher of '" + name + "' is not a bijection");
        }
    }
}

std::string SynthLangSpec::apply(std::string_view base_text) const {
    std::string out;
    out.reserve(base_text.size() * 2);
    for (char c : base_text) {
        if (c >= 'a' && c <= 'z') {
            utf8::append(out, cipher[static_cast<std::size_t>(c - 'a')]);
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::string SynthLangSpec::invert(std::string_view text) const {
    std::string out;
    for (char32_t c : utf8::decode(text)) {
        const auto it = std::find(cipher.begin(), cipher.end(), c);
        if (it != cipher.end()) {
            out.push_back(static_cast<char>('a' + (it - cipher.begin())));
        } else {
            utf8::append(out, c);
        }
    }
    return out;
}

SynthLangSpec SynthLangSpec::identity(std::string name, std::string family) {
    SynthLangSpec s;
    s.name = std::move(name);
    s.family = std::move(family);
    s.script_block_start = U'a';
    for (int i = 0; i < kBaseAlphabetSize; ++i) {
        s.cipher[static_cast<std::size_t>(i)] = U'a' + static_cast<char32_t>(i);
    }
    return s;
}

std::vector<SynthLangSpec> make_family(const std::vector<std::string>& names, const std::string& family,
                                       char32_t block_start, std::uint64_t seed) {
    std::vector<SynthLangSpec> out;
    for (const auto& name : names) {
        Rng rng(Rng::derive(seed, "cipher/" + family + "/" + name));
        std::vector<char32_t> perm;
        for (int i = 0; i < kBaseAlphabetSize; ++i) {
            perm.push_back(block_start + static_cast<char32_t>(i));
        }
        rng.shuffle(perm);
        SynthLangSpec s;
        s.name = name;
        s.family = family;
        s.script_block_start = block_start;
        std::copy(perm.begin(), perm.end(), s.cipher.begin());
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<SynthLangSpec> default_language_specs(std::uint64_t seed) {
    auto specs = make_family({"en", "fr", "es", "de"}, "latin", U'a', seed);
    auto cyr = make_family({"ru", "uk", "bg", "kk"}, "cyrillic", U'а', seed);
    specs.insert(specs.end(), cyr.begin(), cyr.end());
    return specs;
}

std::vector<SynthLangSpec> load_language_specs(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path);
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    std::vector<SynthLangSpec> specs;
    try {
        for (const auto& item : j.at("languages")) {
            SynthLangSpec s;
            s.name = item.at("name").get<std::string>();
            s.family = item.at("family").get<std::string>();
            s.script_block_start = static_cast<char32_t>(item.at("script_block").at(0).get<std::uint32_t>());
            const auto& table = item.at("cipher");
            for (int i = 0; i < kBaseAlphabetSize; ++i) {
                const std::string key(1, static_cast<char>('a' + i));
                const auto cps = utf8::decode(table.at(key).get<std::string>());
                if (cps.size() != 1) {
                    throw ConfigError("cipher entry for '" + key + "' must be one character");
                }
                s.cipher[static_cast<std::size_t>(i)] = cps[0];
            }
            s.validate();
            specs.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return specs;
}

void save_language_specs(const std::vector<SynthLangSpec>& specs, const std::string& path) {
    json arr = json::array();
    for (const auto& s : specs) {
        json table = json::object();
        for (int i = 0; i < kBaseAlphabetSize; ++i) {
            table[std::string(1, static_cast<char>('a' + i))] = utf8::encode(s.cipher[static_cast<std::size_t>(i)]);
        }
        arr.push_back({{"name", s.name},
                       {"family", s.family},
                       {"script_block", {static_cast<std::uint32_t>(s.script_block_start), static_cast<std::uint32_t>(s.script_block_end())}},
                       {"cipher", table}});
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    out << json{{"languages", arr}}.dump(2) << '\n';
}

std::map<std::string, std::vector<Document>> gen_synthetic_multilingual(const std::vector<SynthLangSpec>& specs,
                                                                        int docs_per_lang, std::uint64_t seed) {
    if (specs.size() < 2) {
        throw ConfigError("need at least two language specs");
    }
    std::set<std::string> names;
    std::set<std::string> families;
    for (const auto& s : specs) {
        s.validate();
        if (!names.insert(s.name).second) {
            throw ConfigError("duplicate language name '" + s.name + "'");
        }
        families.insert(s.family);
    }
    if (families.size() < 2) {
        throw ConfigError("need at least two language families");
    }
    std::map<std::string, std::vector<Document>> out;
    for (const auto& spec : specs) {
        auto& docs = out[spec.name];
        for (int i = 0; i < docs_per_lang; ++i) {
            Rng rng(Rng::derive(seed, "doc/" + spec.name + "/" + std::to_string(i)));
            const auto n_sent = rng.uniform_int(2, 5);
            const bool numbered = rng.uniform01() < 0.5;
            std::string base;
            for (std::int64_t s = 0; s < n_sent; ++s) {
                if (!base.empty()) {
                    base += ' ';
                }
                if (numbered) {
                    base += std::to_string(s + 1) + ' ';
                }
                const auto n_words = rng.uniform_int(4, 10);
                for (std::int64_t w = 0; w < n_words; ++w) {
                    base += sampler().draw(rng);
                    base += ' ';
                }
                base += '.';
            }
            docs.push_back({spec.apply(base), spec.name});
        }
    }
    return out;
}

std::vector<SummExample> gen_toy_summarization(const SynthLangSpec& spec, int n_examples, std::uint64_t seed) {
    spec.validate();
    std::vector<SummExample> out;
    for (int i = 0; i < n_examples; ++i) {
        Rng rng(Rng::derive(seed, "summ/" + spec.name + "/" + std::to_string(i)));
        const auto n_steps = rng.uniform_int(3, 8);
        std::string doc;
        std::string summary;
        for (std::int64_t s = 0; s < n_steps; ++s) {
            if (!doc.empty()) {
                doc += ' ';
            }
            doc += std::to_string(s + 1);
            const auto n_words = rng.uniform_int(4, 10);
            for (std::int64_t w = 0; w < n_words; ++w) {
                const std::string& word = sampler().draw(rng);
                doc += ' ';
                doc += word;
                if (w == 0) {
                    if (!summary.empty()) {
                        summary += ' ';
                    }
                    summary += word;
                }
            }
            doc += " .";
        }
        out.push_back({spec.apply(doc), spec.apply(summary), spec.name});
    }
    return out;
}

std::string oracle_summary(std::string_view document) {
    std::string summary;
    bool after_marker = false;
    std::size_t start = 0;
    while (start < document.size()) {
        auto end = document.find(' ', start);
        if (end == std::string_view::npos) {
            end = document.size();
        }
        const std::string_view word = document.substr(start, end - start);
        const bool marker = !word.empty() && std::all_of(word.begin(), word.end(), [](char c) { return c >= '0' && c <= '9'; });
        if (after_marker && !word.empty() && word != ".") {
            if (!summary.empty()) {
                summary += ' ';
            }
            summary += word;
        }
        after_marker = marker;
        start = end + 1;
    }
    return summary;
}

TaskExample clip_example(TaskExample ex, int max_in, int max_out) {
    if (max_in < 1 || max_out < 1) {
        throw ConfigError("clip lengths must be at least 1");
    }
    if (ex.inputs.size() > static_cast<std::size_t>(max_in)) {
        ex.inputs.resize(static_cast<std::size_t>(max_in));
    }
    if (ex.targets.size() > static_cast<std::size_t>(max_out)) {
        ex.targets.resize(static_cast<std::size_t>(max_out));
    }
    return ex;
}

LoadResult<Document> load_documents(const std::string& path) {
    return load_jsonl<Document>(path, [](const json& j) -> std::optional<Document> {
        auto text = string_field(j, "text");
        auto lang = string_field(j, "language");
        if (!text || !lang || trim_ws(*text).empty() || lang->empty()) {
            return std::nullopt;
        }
        return Document{std::move(*text), std::move(*lang)};
    });
}

LoadResult<SummExample> load_summ_examples(const std::string& path) {
    return load_jsonl<SummExample>(path, [](const json& j) -> std::optional<SummExample> {
        auto doc = string_field(j, "document");
        auto sum = string_field(j, "summary");
        auto lang = string_field(j, "language");
        if (!doc || !sum || !lang || trim_ws(*doc).empty() || trim_ws(*sum).empty() || lang->empty()) {
            return std::nullopt;
        }
        return SummExample{std::move(*doc), std::move(*sum), std::move(*lang)};
    });
}

void write_documents(const std::vector<Document>& docs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    for (const auto& d : docs) {
        out << json{{"text", d.text}, {"language", d.language}}.dump() << '\n';
    }
}

void write_summ_examples(const std::vector<SummExample>& examples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    for (const auto& e : examples) {
        out << json{{"document", e.document}, {"summary", e.summary}, {"language", e.language}}.dump() << '\n';
    }
}

} // namespace xgkit
