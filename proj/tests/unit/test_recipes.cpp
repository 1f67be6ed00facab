#include "doctest.h"

#include "xgkit/checkpoint.hpp"
#include "xgkit/errors.hpp"
#include "xgkit/fileio.hpp"
#include "xgkit/recipes.hpp"

#include "json.hpp"

#include <filesystem>

using namespace xgkit;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "xgkit-test-recipes" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

LabConfig tiny_lab() {
    LabConfig c;
    c.docs_per_language = 30;
    c.vocab_size = 400;
    c.lid_ngrams = 500;
    c.backbone = BackboneConfig{16, 2, 1, 1, 32, 0, 64, true};
    c.pretrain_steps = 20;
    c.pretrain_batch = 2;
    c.train_examples = 20;
    c.validation_examples = 4;
    c.test_examples = 4;
    return c;
}

const LabPaths& lab() {
    static const LabPaths p = prepare_lab(tiny_lab(), (fs::temp_directory_path() / "xgkit-test-recipes-lab").string());
    return p;
}

RecipeConfig tiny(const std::string& recipe, const std::string& out) {
    RecipeConfig c = lab_recipe(lab(), recipe, "ru", out);
    c.steps = 4;
    c.batch_size = 2;
    c.checkpoint_every = 2;
    c.prompt_length = 2;
    c.sub_prompt_length = 1;
    c.factorized_steps = 4;
    c.factorized_languages = {"en", "fr", "ru", "uk"};
    c.intermediate_steps = 2;
    c.prefix_n = 4;
    c.beam_size = 2;
    c.max_decode_len = 6;
    return c;
}

} // namespace

TEST_CASE("lab config round trips and rejects unknown keys") {
    const LabConfig c = tiny_lab();
    CHECK(LabConfig::from_json(c.to_json()).to_json() == c.to_json());
    CHECK(LabConfig::from_json("{}").to_json() == LabConfig{}.to_json());
    CHECK_THROWS_AS(LabConfig::from_json(R"({"vocab": 3})"), ConfigError);
}

TEST_CASE("recipe config parsing and validation") {
    RecipeConfig c;
    c.output_dir = "x";
    const RecipeConfig back = RecipeConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.hash() == c.hash());
    c.seed = 2;
    CHECK(c.hash() != back.hash());

    CHECK_THROWS_AS(RecipeConfig::from_json(R"({"stepz": 3})"), ConfigError);
    CHECK_THROWS_AS(RecipeConfig::from_json(R"({"steps": "many"})"), ConfigError);
    CHECK_THROWS_AS(RecipeConfig::from_json("not json"), ConfigError);

    RecipeConfig bad = back;
    bad.recipe = "nope";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = back;
    bad.target_language = bad.source_language;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = back;
    bad.unsup_tasks = {"no_such_task"};
    CHECK_THROWS(bad.validate());
    bad = back;
    bad.output_dir.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(recipe_names().size() == 8);
}

TEST_CASE("missing prerequisites name the key") {
    RecipeConfig c = tiny("vanilla-PT", temp_dir("missing").string());
    c.backbone.clear();
    CHECK_THROWS_AS(run_recipe(c), ConfigError);
    c.backbone = "/nonexistent/backbone.ckpt";
    CHECK_THROWS_AS(run_recipe(c), InputError);
    c = tiny("mix-unsup", temp_dir("missing").string());
    c.corpus.clear();
    CHECK_THROWS_AS(run_recipe(c), ConfigError);
    c = tiny("vanilla-PT", temp_dir("missing").string());
    c.backbone = lab().lid;
    CHECK_THROWS(run_recipe(c));
}

TEST_CASE("lab preparation is reused") {
    const LabPaths& p = lab();
    const std::string before = read_file(p.backbone);
    const LabPaths again = prepare_lab(tiny_lab(), p.dir);
    CHECK(read_file(again.backbone) == before);
    CHECK(fs::exists(p.validation("ru")));
    CHECK(fs::exists(p.test("ru")));
    CHECK(load_checkpoint(p.backbone).kind == "backbone");
}

TEST_CASE("every recipe runs and writes its files") {
    for (const auto& name : recipe_names()) {
        CAPTURE(name);
        const fs::path out = temp_dir(name);
        RecipeConfig c = tiny(name, out.string());
        if (name == "it-main-task") {
            c.intermediate = lab().train;
        }
        const RecipeResult r = run_recipe(c);
        REQUIRE(r.checkpoints.size() == 2);
        CHECK(r.selected < 2);
        for (const auto* f : {"config.json", "report.json", "curves.csv", "manifest.json"}) {
            CHECK(fs::exists(out / f));
        }
        CHECK(fs::exists(out / "checkpoints" / checkpoint_filename(2)));
        CHECK(fs::exists(out / "checkpoints" / checkpoint_filename(4)));
        CHECK(json::parse(read_file((out / "manifest.json").string())).at("validation_sampling") == "first 250 in file order");
        CHECK(r.curves.at("ru").size() == 2);
        CHECK(r.curves.count("en") == 1); // source validation is part of the lab recipe
        const bool fp = name == "fp" || name == "fp-en";
        CHECK(fs::exists(out / "heatmap.svg") == fp);

        const json report = json::parse(read_file((out / "report.json").string()));
        CHECK(report.at("recipe") == name);
        CHECK(report.at("checkpoint_steps") == json::array({2, 4}));
        CHECK(report.at("test").is_object());
        CHECK(report.dump().find(out.string()) == std::string::npos); // no paths in the report
        CHECK(RecipeConfig::from_json(read_file((out / "config.json").string())).to_json() == c.to_json());
        if (name == "mix-unsup" || name == "mix-unsup-all") {
            CHECK(report.at("details").contains("unsup_draws"));
        }
        if (name == "vanilla-MT") {
            CHECK(report.at("tuning") == "model");
        }
    }
}

TEST_CASE("rerunning a recipe reproduces the report byte for byte") {
    const fs::path a = temp_dir("repeat-a");
    const fs::path b = temp_dir("repeat-b");
    run_recipe(tiny("fp", a.string()));
    run_recipe(tiny("fp", b.string()));
    CHECK(read_file((a / "report.json").string()) == read_file((b / "report.json").string()));
    CHECK(read_file((a / "curves.csv").string()) == read_file((b / "curves.csv").string()));
    // same directory again: finished stages are reused, outputs unchanged
    const std::string first = read_file((a / "report.json").string());
    run_recipe(tiny("fp", a.string()));
    CHECK(read_file((a / "report.json").string()) == first);
}

TEST_CASE("fp and fp-en differ only in the language half used at inference") {
    const RecipeResult fp = run_recipe(tiny("fp", temp_dir("fp").string()));
    const RecipeResult en = run_recipe(tiny("fp-en", temp_dir("fp-en").string()));
    REQUIRE(fp.checkpoints.size() == en.checkpoints.size());
    for (std::size_t i = 0; i < fp.checkpoints.size(); ++i) {
        CHECK(fp.checkpoints[i].prompt("task") == en.checkpoints[i].prompt("task"));
        CHECK(fp.checkpoints[i].prompt("language") == en.checkpoints[i].prompt("language"));
    }
    CHECK(fp.lead_lsum == en.lead_lsum);
}
