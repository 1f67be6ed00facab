#pragma once

#include "xgkit/analysis.hpp"
#include "xgkit/training.hpp"

#include <functional>
#include <string>
#include <vector>

namespace xgkit {

const std::vector<std::string>& recipe_names();

// Flat experiment configuration. Unknown keys are rejected when parsing.
struct RecipeConfig {
    std::string recipe = "vanilla-PT";

    // Prerequisite artifacts.
    std::string tokenizer;
    std::string lid;
    std::string backbone;          // checkpoint of kind "backbone"
    std::string corpus;            // multilingual documents (mix, fp, it-lm)
    std::string train;             // source-language summarization examples
    std::string validation;        // target-language examples for checkpoint selection
    std::string test;              // target-language examples for the report
    std::string source_validation; // optional; adds a source-language learning curve
    std::string intermediate;      // summarization examples for it-main-task

    std::string output_dir;
    std::string source_language = "en";
    std::string target_language = "ru";
    std::string tuning = "prompt"; // prompt | model; fixed by vanilla-PT / vanilla-MT / fp*

    std::uint64_t seed = 1;
    int steps = 1000;
    int batch_size = 8;
    int checkpoint_every = 250;
    std::string optimizer = "sgd";
    double lr = 0.1;
    double model_lr = 1e-3; // learning rate when tuning = model
    double clip_norm = 0.0;
    int prompt_length = kDefaultPromptLength;

    double kappa = 1.0;
    std::vector<std::string> unsup_tasks{"span_corruption"};
    std::vector<std::string> unsup_languages; // mix-unsup-all; empty means every corpus language
    int prefix_n = 64;

    int sub_prompt_length = kDefaultSubPromptLength;
    int factorized_steps = 1000;
    double factorized_lr = 0.1;
    std::vector<std::string> factorized_languages; // empty means every corpus language

    int intermediate_steps = 500;

    int beam_size = 4;
    double length_penalty_alpha = 0.6;
    int max_decode_len = 64;
    bool trim = true;

    std::string to_json() const; // pretty-printed, keys sorted
    static RecipeConfig from_json(std::string_view text);
    std::string hash() const;
    void validate() const;
};

struct RecipeResult {
    std::string output_dir;
    std::vector<Checkpoint> checkpoints; // main stage, by step
    std::size_t selected = 0;
    EvalReport test_report;
    Curves curves;
    double lead_lsum = 0.0; // Lead-64 on the test set
};

// Runs one experiment end to end and writes config.json, manifest.json,
// checkpoints/, curves.csv and report.json (fp recipes add a heatmap of the
// language sub-prompts). Re-running with the same config reproduces every
// file byte for byte; finished intermediate stages are reused.
RecipeResult run_recipe(const RecipeConfig& cfg);

// Builds every prerequisite of a recipe: synthetic corpus, tokenizer, LID
// model, pretrained backbone and the summarization splits.
struct LabConfig {
    std::uint64_t seed = 1;
    int docs_per_language = 1000;
    int vocab_size = 1024;
    int lid_ngrams = 4096;
    std::vector<std::string> pretrain_languages{"en", "fr", "ru", "uk"};
    std::vector<std::string> pretrain_tasks{"prefix_lm",   "span_corruption",  "iid_denoising",        "lm",
                                            "missing_prefix", "n_token_prefix", "missing_n_token_prefix"};
    BackboneConfig backbone{64, 4, 2, 2, 256, 0, 128, true}; // vocab_size filled from the tokenizer
    int pretrain_steps = 12000;
    int pretrain_batch = 8;
    double pretrain_lr = 2e-3;
    int prefix_n = 12;
    std::string source_language = "en";
    std::vector<std::string> target_languages{"ru"};
    int train_examples = 2000;
    int validation_examples = 40;
    int test_examples = 40;

    std::string to_json() const;
    static LabConfig from_json(std::string_view text);
};

struct LabPaths {
    std::string dir;
    std::string specs;
    std::string corpus;
    std::string tokenizer;
    std::string lid;
    std::string backbone;
    std::string train;
    std::string source_validation;
    std::string validation(const std::string& lang) const;
    std::string test(const std::string& lang) const;
};

// Artifacts already present with a matching lab.json are kept, so a second
// call is cheap. `log` receives progress lines when set.
LabPaths prepare_lab(const LabConfig& cfg, const std::string& dir,
                     const std::function<void(const std::string&)>& log = {});

// A recipe config pointing at a prepared lab.
RecipeConfig lab_recipe(const LabPaths& lab, const std::string& recipe, const std::string& target_language,
                        const std::string& output_dir);

} // namespace xgkit
