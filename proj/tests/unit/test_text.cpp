#include "doctest.h"

#include "support/oracles.hpp"

#include "xgkit/corpus.hpp"
#include "xgkit/errors.hpp"
#include "xgkit/metrics.hpp"
#include "xgkit/textops.hpp"
#include "xgkit/tokenizer.hpp"

#include <filesystem>

using namespace xgkit;

namespace {

std::vector<std::string> sample_corpus() {
    std::vector<std::string> texts;
    const auto docs = gen_synthetic_multilingual(default_language_specs(4), 20, 9);
    for (const auto& [lang, ds] : docs) {
        for (const auto& d : ds) {
            texts.push_back(d.text);
        }
    }
    return texts;
}

const SubwordModel& model() {
    static const SubwordModel m = train_subword(sample_corpus(), 600, 1);
    return m;
}

} // namespace

TEST_CASE("tokenizer id layout") {
    const auto& m = model();
    CHECK(m.vocab_size() <= 600);
    CHECK(m.num_ids() == m.vocab_size() + kNumSentinels);
    CHECK(m.num_merges() == m.vocab_size() - kNumSpecial - kNumBytes);
    CHECK(m.sentinel(0) == m.vocab_size());
    CHECK(m.is_sentinel(m.sentinel(99)));
    CHECK_FALSE(m.is_sentinel(m.vocab_size() - 1));
    CHECK(m.decode(std::vector<int>{m.sentinel(3)}) == sentinel_text(3));
    for (int id : m.encode("hello world")) {
        CHECK(id >= kByteOffset);
        CHECK(id < m.vocab_size());
    }
}

TEST_CASE("tokenizer round trip on random unicode") {
    Rng rng(17);
    for (int i = 0; i < 300; ++i) {
        const std::string s = oracle::random_unicode(rng);
        REQUIRE(model().decode(model().encode(s)) == s);
    }
    CHECK(model().decode(model().encode("")) == "");
    CHECK(model().decode(model().encode("  two  spaces \n")) == "  two  spaces \n");
}

TEST_CASE("merges compress the training text") {
    const std::string text = sample_corpus().front();
    CHECK(model().encode(text).size() < text.size());
}

TEST_CASE("training is deterministic and serializes losslessly") {
    const SubwordModel a = train_subword(sample_corpus(), 400, 3);
    const SubwordModel b = train_subword(sample_corpus(), 400, 3);
    CHECK(a.serialize() == b.serialize());
    CHECK(a.fingerprint() == b.fingerprint());
    const SubwordModel c = SubwordModel::parse(a.serialize());
    CHECK(c.serialize() == a.serialize());
    CHECK(c.encode("some text") == a.encode("some text"));
}

TEST_CASE("stray bytes decode to replacement characters") {
    // 0xD0 alone is the first half of a two-byte Cyrillic letter.
    const std::string out = model().decode(std::vector<int>{kByteOffset + 0xD0, kByteOffset + 'a'});
    CHECK(out == "\xEF\xBF\xBD" "a");
}

TEST_CASE("tokenizer rejects bad input") {
    CHECK_THROWS_AS(model().decode(std::vector<int>{-1}), InputError);
    CHECK_THROWS_AS(model().decode(std::vector<int>{model().num_ids()}), InputError);
    CHECK_THROWS_AS(train_subword({"abc"}, 10, 1), ConfigError);
    CHECK_THROWS_AS(SubwordModel::parse("garbage"), FormatError);
}

TEST_CASE("trim fixtures") {
    for (const auto& [in, expected] : oracle::trim_fixtures()) {
        CAPTURE(in);
        CHECK(trim_trailing_repeats(in).first == expected);
    }
    const auto [text, rep] = trim_trailing_repeats("abcxyxyxy");
    CHECK(rep.original_len == 9);
    CHECK(rep.trimmed_len == 5);
    CHECK(rep.removed_unit == "xy");
    CHECK(rep.repetitions_removed == 2);
    const auto none = trim_trailing_repeats("plain").second;
    CHECK(none.repetitions_removed == 0);
    CHECK(none.removed_unit.empty());
}

TEST_CASE("trim is idempotent and only shortens") {
    Rng rng(5);
    const std::string alphabet = "ab ";
    for (int i = 0; i < 500; ++i) {
        std::string s;
        const auto n = rng.uniform_int(0, 20);
        for (std::int64_t k = 0; k < n; ++k) {
            s += alphabet[rng.below(alphabet.size())];
        }
        const std::string once = trim_trailing_repeats(s).first;
        REQUIRE(trim_trailing_repeats(once).first == once);
        REQUIRE(s.rfind(once, 0) == 0); // a prefix of the input
    }
}

TEST_CASE("lead-n takes the first n tokens") {
    SummExample ex{"one two three four five six", "x", "en"};
    const auto ids = model().encode(ex.document);
    REQUIRE(ids.size() > 3);
    CHECK(lead_n(ex, model(), 3) == model().decode(std::vector<int>(ids.begin(), ids.begin() + 3)));
    CHECK(lead_n(ex, model(), 10000) == ex.document);
    CHECK_THROWS_AS(lead_n(ex, model(), 0), ConfigError);
}

TEST_CASE("rouge-n against the brute-force oracle") {
    Rng rng(11);
    for (int i = 0; i < 300; ++i) {
        std::vector<int> a(rng.below(15)), b(rng.below(15));
        for (int& t : a) t = static_cast<int>(rng.below(5));
        for (int& t : b) t = static_cast<int>(rng.below(5));
        for (int n : {1, 2, 3}) {
            const PRF got = rouge_n(a, b, n);
            const auto want = oracle::rouge_n(a, b, n);
            REQUIRE(got.precision == want.p);
            REQUIRE(got.recall == want.r);
            REQUIRE(got.f1 == want.f);
        }
    }
    CHECK_THROWS_AS(rouge_n(std::vector<int>{1}, std::vector<int>{1}, 0), InputError);
}

TEST_CASE("rouge-lsum against the recursive oracle") {
    Rng rng(12);
    for (int i = 0; i < 300; ++i) {
        auto sents = [&rng] {
            std::vector<TokenIds> s(1 + rng.below(3));
            for (auto& x : s) {
                x.resize(rng.below(8));
                for (int& t : x) t = static_cast<int>(rng.below(4));
            }
            return s;
        };
        const auto r = sents();
        const auto c = sents();
        const PRF got = rouge_lsum(r, c);
        const auto want = oracle::rouge_lsum(r, c);
        REQUIRE(got.precision == want.p);
        REQUIRE(got.recall == want.r);
        REQUIRE(got.f1 == want.f);
    }
}

TEST_CASE("rouge-lsum hand example") {
    // ref "a b c d", cand sentences "a b" and "c x": union of LCS hits = {a,b,c}
    const PRF p = rouge_lsum({{1, 2, 3, 4}}, {{1, 2}, {3, 9}});
    CHECK(p.recall == 0.75);
    CHECK(p.precision == 0.75);
    // clipping: a repeated candidate sentence cannot credit the same token twice
    const PRF q = rouge_lsum({{1, 2}, {1, 2}}, {{1, 2}});
    CHECK(q.precision == 1.0);
    CHECK(q.recall == 0.5);
}

TEST_CASE("sp-rouge identity and sentence split") {
    CHECK(split_sentences(" a \n\n b\n") == std::vector<std::string>{"a", "b"});
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        std::string s = oracle::random_unicode(rng);
        if (split_sentences(s).empty()) {
            s += "x";
        }
        CHECK(100.0 * sp_rouge(model(), s, s).lsum.f1 == 100.0);
    }
    CHECK(sp_rouge(model(), "abc", "").lsum.f1 == 0.0);
}

TEST_CASE("pearson") {
    const std::vector<double> x{1, 2, 3, 4};
    CHECK(pearson(x, std::vector<double>{2, 4, 6, 8}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson(x, std::vector<double>{8, 6, 4, 2}) == doctest::Approx(-1.0).epsilon(1e-12));
    // symmetric around the mean: exactly uncorrelated
    CHECK(std::abs(pearson(std::vector<double>{-1, 0, 1}, std::vector<double>{1, -2, 1})) <= 1e-12);
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> a(10), b(10);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        CHECK(std::abs(pearson(a, b) - oracle::pearson(a, b)) <= 1e-12);
    }
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedError);
    CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), InputError);
}
