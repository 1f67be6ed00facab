#include "doctest.h"

#include "xgkit/analysis.hpp"
#include "xgkit/corpus.hpp"
#include "xgkit/errors.hpp"
#include "xgkit/fileio.hpp"

#include <algorithm>
#include <filesystem>

using namespace xgkit;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "xgkit-test-analysis";
    fs::create_directories(dir);
    return (dir / name).string();
}

Prompt row(std::initializer_list<double> v) {
    Mat m(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) m(0, i++) = x;
    return Prompt(m);
}

// Two families around orthogonal directions, with small per-language offsets.
std::map<std::string, Prompt> family_prompts() {
    return {
        {"en", row({1.0, 0.1, 0.0, 0.0})},  {"fr", row({1.0, 0.0, 0.1, 0.0})},
        {"es", row({0.9, 0.0, 0.0, 0.1})},  {"de", row({1.0, -0.1, 0.0, 0.0})},
        {"ru", row({0.0, 0.1, 1.0, 0.9})},  {"uk", row({0.1, 0.0, 1.0, 1.0})},
        {"bg", row({0.0, 0.0, 0.9, 1.0})},  {"kk", row({0.0, -0.1, 1.0, 1.1})},
    };
}

} // namespace

TEST_CASE("similarity matrix is symmetric with a unit diagonal") {
    const auto m = prompt_similarity_matrix(family_prompts());
    REQUIRE(m.size() == 8);
    for (Eigen::Index i = 0; i < 8; ++i) {
        CHECK(m.values(i, i) == 1.0);
        for (Eigen::Index j = 0; j < 8; ++j) {
            CHECK(m.values(i, j) == m.values(j, i));
            CHECK(m.values(i, j) <= 1.0);
            CHECK(m.values(i, j) >= -1.0);
        }
    }
    CHECK(m.at("en", "fr") > m.at("en", "ru"));
    CHECK(std::abs(m.at("en", "ru") - m.at("ru", "en")) == 0.0);
}

TEST_CASE("multi-row prompts are mean pooled") {
    Mat a(2, 2);
    a << 1, 0, 0, 1;
    Mat b(1, 2);
    b << 1, 1;
    Mat b2(2, 2);
    b2 << 2, 2, 0, 0;
    const auto m = prompt_similarity_matrix({{"a", Prompt(a)}, {"b", Prompt(b2)}});
    CHECK(m.at("a", "b") == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(prompt_similarity_matrix({{"a", Prompt(a)}, {"b", Prompt(b)}}), InputError);
    CHECK_THROWS_AS(prompt_similarity_matrix({{"a", Prompt(a)}}), InputError);
    CHECK_THROWS_AS(prompt_similarity_matrix({{"a", Prompt(a)}, {"z", Prompt(Mat::Zero(2, 2))}}), InputError);
}

TEST_CASE("average-linkage clustering recovers the families") {
    const auto m = prompt_similarity_matrix(family_prompts());
    const Partition p = agglomerative_cluster(m, 2);
    CHECK(p == Partition{{"bg", "kk", "ru", "uk"}, {"de", "en", "es", "fr"}});
    CHECK(agglomerative_cluster(m, 8).size() == 8);
    CHECK(agglomerative_cluster(m, 1).size() == 1);
    CHECK_THROWS_AS(agglomerative_cluster(m, 0), ConfigError);
    CHECK_THROWS_AS(agglomerative_cluster(m, 9), ConfigError);
}

TEST_CASE("clustering does not depend on label order") {
    const auto m = prompt_similarity_matrix(family_prompts());
    std::vector<std::string> order = m.labels;
    std::reverse(order.begin(), order.end());
    const auto r = reorder(m, order);
    CHECK(r.labels == order);
    CHECK(r.at("ru", "en") == m.at("ru", "en"));
    for (int k = 1; k <= 8; ++k) {
        CHECK(agglomerative_cluster(r, k) == agglomerative_cluster(m, k));
    }
    CHECK(cluster_leaf_order(r) == cluster_leaf_order(m));
}

TEST_CASE("ties go to the lexicographically first pair") {
    // a, b, c, d all equally dissimilar: merges must follow label order
    SimilarityMatrix m;
    m.labels = {"d", "c", "b", "a"};
    m.values = Eigen::MatrixXd::Constant(4, 4, 0.5);
    m.values.diagonal().setOnes();
    CHECK(agglomerative_cluster(m, 3) == Partition{{"a", "b"}, {"c"}, {"d"}});
}

TEST_CASE("leaf order keeps families contiguous") {
    const auto order = cluster_leaf_order(prompt_similarity_matrix(family_prompts()));
    REQUIRE(order.size() == 8);
    auto family = [](const std::string& l) { return l == "ru" || l == "uk" || l == "bg" || l == "kk"; };
    int switches = 0;
    for (std::size_t i = 1; i < order.size(); ++i) switches += family(order[i]) != family(order[i - 1]);
    CHECK(switches == 1);
}

TEST_CASE("heatmap svg and matrix csv") {
    const auto m = prompt_similarity_matrix(family_prompts());
    const auto order = cluster_leaf_order(m);
    export_heatmap(m, order, temp_path("h.svg"), temp_path("m.csv"));
    const std::string svg = read_file(temp_path("h.svg"));
    CHECK(svg.rfind("<svg", 0) == 0);
    std::size_t cells = 0;
    for (auto pos = svg.find("class=\"cell\""); pos != std::string::npos; pos = svg.find("class=\"cell\"", pos + 1)) ++cells;
    CHECK(cells == 64);
    CHECK(svg.find("class=\"row-label\"") != std::string::npos);
    const SimilarityMatrix back = read_matrix_csv(temp_path("m.csv"));
    CHECK(back.labels == order);
    for (const auto& a : order)
        for (const auto& b : order) CHECK(back.at(a, b) == m.at(a, b));
    CHECK(matrix_csv(reorder(m, order)) == read_file(temp_path("m.csv")));
    write_file(temp_path("bad.csv"), "label,a\nb,1\n");
    CHECK_THROWS_AS(read_matrix_csv(temp_path("bad.csv")), FormatError);
}

TEST_CASE("learning curves from a fake predictor") {
    const auto specs = default_language_specs(1);
    std::vector<std::string> texts;
    const auto docs = gen_synthetic_multilingual(specs, 10, 1);
    for (const auto& [l, ds] : docs)
        for (const auto& d : ds) texts.push_back(d.text);
    const SubwordModel tok = train_subword(texts, 400, 1);
    const LidModel lid = train_lid(docs, 1000, 1);
    std::map<std::string, std::vector<SummExample>> sets{{"en", gen_toy_summarization(specs[0], 5, 1)},
                                                         {"ru", gen_toy_summarization(specs[4], 5, 1)}};
    std::vector<Checkpoint> ckpts(2);
    ckpts[0].step = 200;
    ckpts[1].step = 100;
    EvalContext ctx;
    ctx.tokenizer = &tok;
    ctx.lid = &lid;
    ctx.trim = false;
    ctx.predict = [&](const Checkpoint& c, const std::vector<SummExample>& data) {
        std::vector<std::string> out;
        for (const auto& ex : data) out.push_back(c.step == 100 ? ex.summary : sets.at("en")[0].summary);
        return out;
    };
    const Curves curves = learning_curves(ckpts, sets, ctx);
    REQUIRE(curves.at("ru").size() == 2);
    CHECK(curves.at("ru")[0].step == 100);
    CHECK(curves.at("ru")[0].sp_rg_lsum == 100.0);
    CHECK(curves.at("ru")[0].lid_target > 90.0);
    CHECK(curves.at("ru")[1].lid_target < 10.0);
    CHECK(curves.at("ru")[1].lid_en_analog > 90.0);
    CHECK(curves.at("ru")[1].ascii == 100.0);

    write_curves_csv(curves, temp_path("curves.csv"));
    CHECK(read_curves_csv(temp_path("curves.csv")) == curves);
    CHECK(read_file(temp_path("curves.csv")).rfind("step,language,sp_rg_lsum,lid_target,lid_en,ascii\n", 0) == 0);

    std::vector<Checkpoint> dup(2);
    CHECK_THROWS_AS(learning_curves(dup, sets, ctx), InputError);
    sets["xx"] = sets["en"];
    CHECK_THROWS_AS(learning_curves(ckpts, sets, ctx), InputError);
}
