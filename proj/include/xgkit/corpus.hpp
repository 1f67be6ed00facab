#pragma once

#include "xgkit/example.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace xgkit {

struct Document {
    std::string text;
    std::string language;

    bool operator==(const Document&) const = default;
};

struct SummExample {
    std::string document;
    std::string summary;
    std::string language;

    bool operator==(const SummExample&) const = default;
};

inline constexpr int kBaseAlphabetSize = 26;

// A synthetic language: a bijective substitution of the base alphabet a-z
// into a 26-code-point script block. Space, '.', and digits are shared by
// every language.
struct SynthLangSpec {
    std::string name;
    std::string family;
    std::array<char32_t, kBaseAlphabetSize> cipher{};
    char32_t script_block_start = U'a';

    char32_t script_block_end() const { return script_block_start + kBaseAlphabetSize - 1; }
    void validate() const;

    std::string apply(std::string_view base_text) const;
    std::string invert(std::string_view text) const;

    static SynthLangSpec identity(std::string name, std::string family);
};

// Languages of one family get distinct seeded permutations of the same block.
std::vector<SynthLangSpec> make_family(const std::vector<std::string>& names, const std::string& family,
                                       char32_t block_start, std::uint64_t seed);

// Four ASCII-script languages (en, fr, es, de) and four in the Cyrillic
// block (ru, uk, bg, kk); the default laboratory setup.
std::vector<SynthLangSpec> default_language_specs(std::uint64_t seed);

std::vector<SynthLangSpec> load_language_specs(const std::string& path);
void save_language_specs(const std::vector<SynthLangSpec>& specs, const std::string& path);

const std::vector<std::string>& base_lexicon();
bool is_shared_character(char32_t c);
bool is_base_grammar_text(std::string_view text);

std::map<std::string, std::vector<Document>> gen_synthetic_multilingual(const std::vector<SynthLangSpec>& specs,
                                                                        int docs_per_lang, std::uint64_t seed);

std::vector<SummExample> gen_toy_summarization(const SynthLangSpec& spec, int n_examples, std::uint64_t seed);

// Extracts the summary implied by a toy document: the word after each step marker.
std::string oracle_summary(std::string_view document);

inline constexpr int kDefaultMaxInputTokens = 1024;
inline constexpr int kDefaultMaxTargetTokens = 512;

TaskExample clip_example(TaskExample ex, int max_in = kDefaultMaxInputTokens, int max_out = kDefaultMaxTargetTokens);

enum class RecordSchema { plain, summ };

template <class T>
struct LoadResult {
    std::vector<T> records;
    std::size_t skipped = 0;
};

LoadResult<Document> load_documents(const std::string& path);
LoadResult<SummExample> load_summ_examples(const std::string& path);

void write_documents(const std::vector<Document>& docs, const std::string& path);
void write_summ_examples(const std::vector<SummExample>& examples, const std::string& path);

} // namespace xgkit
