#include "xgkit/recipes.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/fileio.hpp"
#include "xgkit/hash.hpp"
#include "xgkit/textops.hpp"

#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

namespace xgkit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Copies `src` keys into `dst`, refusing keys `dst` does not already have.
void merge_known(json& dst, const json& src, const std::string& what) {
    if (!src.is_object()) {
        throw ConfigError(what + " must be a JSON object");
    }
    for (const auto& [key, value] : src.items()) {
        if (!dst.contains(key)) {
            throw ConfigError("unknown " + what + " key '" + key + "'");
        }
        if (!dst[key].is_null() && value.type() != dst[key].type() &&
            !(dst[key].is_number() && value.is_number())) {
            throw ConfigError(what + " key '" + key + "' has the wrong type");
        }
        dst[key] = value;
    }
}

json parse_json(std::string_view text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(what + " is not valid JSON: " + e.what());
    }
}

template <class T>
T get(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has an invalid value");
    }
}

std::uint64_t get_seed(const json& j, const char* key) {
    const json& v = j.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

bool uses_corpus(const std::string& recipe) {
    return recipe == "mix-unsup" || recipe == "mix-unsup-all" || recipe == "fp" || recipe == "fp-en" ||
           recipe == "it-lm";
}

bool is_fp(const std::string& recipe) { return recipe == "fp" || recipe == "fp-en"; }

void require_artifact(const std::string& path, const char* key, const std::string& what, const std::string& hint) {
    if (path.empty()) {
        throw ConfigError("missing prerequisite: config key '" + std::string(key) + "' (" + what + ") is required; " +
                          hint);
    }
    if (!fs::exists(path)) {
        throw InputError("missing prerequisite: " + what + " not found at '" + path + "'; " + hint);
    }
}

std::vector<SummExample> load_split(const std::string& path, const std::string& what) {
    auto loaded = load_summ_examples(path);
    if (loaded.records.empty()) {
        throw InputError(what + " '" + path + "' has no usable examples");
    }
    return std::move(loaded.records);
}

std::map<std::string, std::vector<TokenIds>> load_corpus_ids(const std::string& path, const SubwordModel& tok) {
    std::map<std::string, std::vector<TokenIds>> ids;
    for (const auto& doc : load_documents(path).records) {
        ids[doc.language].push_back(tok.encode(doc.text));
    }
    if (ids.empty()) {
        throw InputError("corpus '" + path + "' has no documents");
    }
    return ids;
}

std::string docs_key(const std::vector<SummExample>& data) {
    Fnv1a h;
    for (const auto& ex : data) {
        h.update(ex.document);
        h.update("\x1f", 1);
    }
    return h.hex();
}

// Memoizes predictions so checkpoint selection reuses the decodes already
// done for the learning curves.
CheckpointPredictor cached(CheckpointPredictor inner) {
    auto cache = std::make_shared<std::map<std::pair<std::int64_t, std::string>, std::vector<std::string>>>();
    return [inner = std::move(inner), cache](const Checkpoint& ckpt, const std::vector<SummExample>& data) {
        const auto key = std::make_pair(ckpt.step, docs_key(data));
        const auto it = cache->find(key);
        if (it != cache->end()) {
            return it->second;
        }
        auto out = inner(ckpt, data);
        cache->emplace(key, out);
        return out;
    };
}

std::string stage_path(const std::string& dir, std::int64_t step) { return (fs::path(dir) / checkpoint_filename(step)).string(); }

// A finished stage is reused when its final checkpoint carries the same stage hash.
std::optional<Checkpoint> reusable_stage(const std::string& dir, std::int64_t step, const std::string& stage_hash) {
    const std::string path = stage_path(dir, step);
    if (!fs::exists(path)) {
        return std::nullopt;
    }
    Checkpoint c = load_checkpoint(path);
    if (c.data_hash != stage_hash || c.step != step) {
        return std::nullopt;
    }
    return c;
}

json scores_json(const LanguageScores& s) {
    return json{{"sp_rg_lsum", s.sp_rg_lsum}, {"sp_rg_1", s.sp_rg_1}, {"sp_rg_2", s.sp_rg_2},
                {"lid_target", s.lid_target}, {"lid_en", s.lid_en},     {"ascii", s.ascii},
                {"n", s.n}};
}

} // namespace

const std::vector<std::string>& recipe_names() {
    static const std::vector<std::string> names{"vanilla-PT", "vanilla-MT", "mix-unsup", "mix-unsup-all",
                                                "fp",         "fp-en",      "it-lm",     "it-main-task"};
    return names;
}

std::string RecipeConfig::to_json() const {
    json j{{"recipe", recipe},
           {"tokenizer", tokenizer},
           {"lid", lid},
           {"backbone", backbone},
           {"corpus", corpus},
           {"train", train},
           {"validation", validation},
           {"test", test},
           {"source_validation", source_validation},
           {"intermediate", intermediate},
           {"output_dir", output_dir},
           {"source_language", source_language},
           {"target_language", target_language},
           {"tuning", tuning},
           {"seed", seed},
           {"steps", steps},
           {"batch_size", batch_size},
           {"checkpoint_every", checkpoint_every},
           {"optimizer", optimizer},
           {"lr", lr},
           {"model_lr", model_lr},
           {"clip_norm", clip_norm},
           {"prompt_length", prompt_length},
           {"kappa", kappa},
           {"unsup_tasks", unsup_tasks},
           {"unsup_languages", unsup_languages},
           {"prefix_n", prefix_n},
           {"sub_prompt_length", sub_prompt_length},
           {"factorized_steps", factorized_steps},
           {"factorized_lr", factorized_lr},
           {"factorized_languages", factorized_languages},
           {"intermediate_steps", intermediate_steps},
           {"beam_size", beam_size},
           {"length_penalty_alpha", length_penalty_alpha},
           {"max_decode_len", max_decode_len},
           {"trim", trim}};
    return j.dump(2) + "\n";
}

RecipeConfig RecipeConfig::from_json(std::string_view text) {
    json j = parse_json(RecipeConfig{}.to_json(), "defaults");
    merge_known(j, parse_json(text, "recipe config"), "recipe config");
    RecipeConfig c;
    c.recipe = get<std::string>(j, "recipe");
    c.tokenizer = get<std::string>(j, "tokenizer");
    c.lid = get<std::string>(j, "lid");
    c.backbone = get<std::string>(j, "backbone");
    c.corpus = get<std::string>(j, "corpus");
    c.train = get<std::string>(j, "train");
    c.validation = get<std::string>(j, "validation");
    c.test = get<std::string>(j, "test");
    c.source_validation = get<std::string>(j, "source_validation");
    c.intermediate = get<std::string>(j, "intermediate");
    c.output_dir = get<std::string>(j, "output_dir");
    c.source_language = get<std::string>(j, "source_language");
    c.target_language = get<std::string>(j, "target_language");
    c.tuning = get<std::string>(j, "tuning");
    c.seed = get_seed(j, "seed");
    c.steps = get<int>(j, "steps");
    c.batch_size = get<int>(j, "batch_size");
    c.checkpoint_every = get<int>(j, "checkpoint_every");
    c.optimizer = get<std::string>(j, "optimizer");
    c.lr = get<double>(j, "lr");
    c.model_lr = get<double>(j, "model_lr");
    c.clip_norm = get<double>(j, "clip_norm");
    c.prompt_length = get<int>(j, "prompt_length");
    c.kappa = get<double>(j, "kappa");
    c.unsup_tasks = get<std::vector<std::string>>(j, "unsup_tasks");
    c.unsup_languages = get<std::vector<std::string>>(j, "unsup_languages");
    c.prefix_n = get<int>(j, "prefix_n");
    c.sub_prompt_length = get<int>(j, "sub_prompt_length");
    c.factorized_steps = get<int>(j, "factorized_steps");
    c.factorized_lr = get<double>(j, "factorized_lr");
    c.factorized_languages = get<std::vector<std::string>>(j, "factorized_languages");
    c.intermediate_steps = get<int>(j, "intermediate_steps");
    c.beam_size = get<int>(j, "beam_size");
    c.length_penalty_alpha = get<double>(j, "length_penalty_alpha");
    c.max_decode_len = get<int>(j, "max_decode_len");
    c.trim = get<bool>(j, "trim");
    return c;
}

std::string RecipeConfig::hash() const { return hash_bytes(to_json()); }

void RecipeConfig::validate() const {
    const auto& names = recipe_names();
    if (std::find(names.begin(), names.end(), recipe) == names.end()) {
        std::string all;
        for (const auto& n : names) {
            all += (all.empty() ? "" : ", ") + n;
        }
        throw ConfigError("unknown recipe '" + recipe + "' (expected one of " + all + ")");
    }
    if (tuning != "prompt" && tuning != "model") {
        throw ConfigError("tuning must be 'prompt' or 'model'");
    }
    if (output_dir.empty()) {
        throw ConfigError("config key 'output_dir' is required");
    }
    if (steps < 1 || batch_size < 1 || checkpoint_every < 0 || prompt_length < 1 || sub_prompt_length < 1 ||
        factorized_steps < 1 || intermediate_steps < 1 || prefix_n < 1) {
        throw ConfigError("step counts, batch size, prompt lengths and prefix_n must be positive");
    }
    if (!(kappa >= 0.0 && kappa <= 100.0)) {
        throw ConfigError("kappa must be in [0, 100]");
    }
    if (unsup_tasks.empty()) {
        throw ConfigError("unsup_tasks must name at least one task");
    }
    for (const auto& t : unsup_tasks) {
        parse_task(t);
    }
    if (source_language == target_language) {
        throw ConfigError("source and target language must differ");
    }
    DecodeConfig{beam_size, length_penalty_alpha, max_decode_len}.validate();
}

RecipeResult run_recipe(const RecipeConfig& cfg) {
    cfg.validate();
    const std::string& r = cfg.recipe;
    const bool model_tuning = r == "vanilla-MT" || (r != "vanilla-PT" && !is_fp(r) && cfg.tuning == "model");

    require_artifact(cfg.tokenizer, "tokenizer", "tokenizer model", "train one with `xgkit tokenizer-train`");
    require_artifact(cfg.lid, "lid", "LID model", "train one with `xgkit lid-train`");
    require_artifact(cfg.backbone, "backbone", "backbone checkpoint", "pretrain one with `xgkit pretrain`");
    require_artifact(cfg.train, "train", "source-language training set", "generate one with `xgkit gen-summ`");
    require_artifact(cfg.validation, "validation", "target-language validation set",
                     "generate one with `xgkit gen-summ`");
    require_artifact(cfg.test, "test", "target-language test set", "generate one with `xgkit gen-summ`");
    if (uses_corpus(r)) {
        require_artifact(cfg.corpus, "corpus", "multilingual document corpus", "generate one with `xgkit gen-corpus`");
    }
    if (r == "it-main-task") {
        require_artifact(cfg.intermediate, "intermediate", "intermediate-task training set",
                         "supply summarization JSONL records");
    }
    if (!cfg.source_validation.empty()) {
        require_artifact(cfg.source_validation, "source_validation", "source-language validation set",
                         "generate one with `xgkit gen-summ` or leave the key empty");
    }

    const SubwordModel tok = SubwordModel::load(cfg.tokenizer);
    const LidModel lid = LidModel::load(cfg.lid);
    const Checkpoint bb_ckpt = load_checkpoint(cfg.backbone);
    if (bb_ckpt.kind != "backbone") {
        throw InputError("'" + cfg.backbone + "' holds a " + bb_ckpt.kind + " checkpoint, not a backbone");
    }
    Backbone bb = bb_ckpt.backbone();
    bb.freeze();
    if (bb.config().vocab_size != tok.num_ids()) {
        throw InputError("backbone id space (" + std::to_string(bb.config().vocab_size) +
                         ") does not match the tokenizer (" + std::to_string(tok.num_ids()) + ")");
    }
    for (const auto& l : {cfg.source_language, cfg.target_language}) {
        if (!lid.knows(l)) {
            throw InputError("LID model has no language '" + l + "'");
        }
    }

    const auto train = load_split(cfg.train, "training set");
    const auto validation = load_split(cfg.validation, "validation set");
    const auto test = load_split(cfg.test, "test set");

    const fs::path out(cfg.output_dir);
    const fs::path ckpt_dir = out / "checkpoints";
    fs::create_directories(ckpt_dir);
    write_file((out / "config.json").string(), cfg.to_json());

    json inputs = json::object();
    auto record_input = [&](const char* key, const std::string& path) {
        if (!path.empty()) {
            inputs[key] = json{{"path", path}, {"hash", hash_file(path)}};
        }
    };
    record_input("tokenizer", cfg.tokenizer);
    record_input("lid", cfg.lid);
    record_input("backbone", cfg.backbone);
    record_input("train", cfg.train);
    record_input("validation", cfg.validation);
    record_input("test", cfg.test);
    record_input("source_validation", cfg.source_validation);
    if (uses_corpus(r)) {
        record_input("corpus", cfg.corpus);
    }
    if (r == "it-main-task") {
        record_input("intermediate", cfg.intermediate);
    }
    const std::string data_hash = hash_bytes(inputs.dump() + cfg.hash());

    std::map<std::string, std::vector<TokenIds>> corpus_ids;
    if (uses_corpus(r)) {
        corpus_ids = load_corpus_ids(cfg.corpus, tok);
    }
    auto corpus_languages = [&](const std::vector<std::string>& wanted, const char* key) {
        std::vector<std::string> langs = wanted;
        if (langs.empty()) {
            for (const auto& [l, ids] : corpus_ids) {
                langs.push_back(l);
            }
        }
        for (const auto& l : langs) {
            if (!corpus_ids.count(l)) {
                throw InputError(std::string(key) + ": corpus '" + cfg.corpus + "' has no documents in '" + l + "'");
            }
        }
        return langs;
    };

    TaskParams tp;
    tp.sentinel_base = tok.vocab_size();
    tp.prefix_n = cfg.prefix_n;

    TrainConfig tc;
    tc.steps = cfg.steps;
    tc.batch_size = cfg.batch_size;
    tc.checkpoint_every = cfg.checkpoint_every;
    tc.seed = cfg.seed;
    tc.optimizer.kind = cfg.optimizer;
    tc.optimizer.lr = model_tuning ? cfg.model_lr : cfg.lr;
    tc.optimizer.clip_norm = cfg.clip_norm;
    tc.data_hash = data_hash;
    tc.dump_path = (out / "nonfinite-dump.json").string();

    auto main_stream = std::make_shared<ListStream>(summarization_examples(train, tok, bb.config()), cfg.seed);
    std::shared_ptr<ExampleStream> stream = main_stream;
    if (r == "mix-unsup" || r == "mix-unsup-all") {
        const std::vector<std::string> langs = r == "mix-unsup"
                                                   ? corpus_languages({cfg.target_language}, "mix-unsup")
                                                   : corpus_languages(cfg.unsup_languages, "unsup_languages");
        std::vector<TaskKind> kinds;
        for (const auto& t : cfg.unsup_tasks) {
            kinds.push_back(parse_task(t));
        }
        std::map<std::string, std::shared_ptr<ExampleStream>> streams{{"main", main_stream}};
        MixtureSpec spec{cfg.kappa, "main", {}, cfg.seed};
        for (const auto& l : langs) {
            const std::string name = "unsup/" + l;
            streams[name] = std::make_shared<TaskStream>(corpus_ids.at(l), l, kinds, tp, Rng::derive(cfg.seed, name));
            spec.unsup.push_back(name);
        }
        stream = build_mixture(spec, std::move(streams));
    }

    TrainResult main_run;
    std::optional<Backbone> tuned; // intermediate-tuned weights for it-* under model tuning
    std::optional<Prompt> prompt_init;
    PromptSource prompt_for = [](const Checkpoint& c) { return std::optional<Prompt>(c.prompt("prompt")); };
    json extra = json::object();

    if (r == "it-lm" || r == "it-main-task") {
        std::shared_ptr<ExampleStream> inter;
        if (r == "it-lm") {
            corpus_languages({cfg.target_language}, "it-lm");
            inter = std::make_shared<TaskStream>(corpus_ids.at(cfg.target_language), cfg.target_language,
                                                 std::vector<TaskKind>{TaskKind::lm}, tp,
                                                 Rng::derive(cfg.seed, "intermediate"));
        } else {
            const auto data = load_split(cfg.intermediate, "intermediate set");
            inter = std::make_shared<ListStream>(summarization_examples(data, tok, bb.config()),
                                                 Rng::derive(cfg.seed, "intermediate"));
        }
        TrainConfig ic = tc;
        ic.steps = cfg.intermediate_steps;
        ic.checkpoint_every = 0;
        ic.data_hash = hash_bytes(data_hash + "/intermediate");
        const std::string dir = (ckpt_dir / "intermediate").string();
        fs::create_directories(dir);
        std::optional<Checkpoint> done = reusable_stage(dir, ic.steps, ic.data_hash);
        if (!done) {
            TrainResult res;
            if (model_tuning) {
                Backbone copy = bb;
                copy.unfreeze();
                res = train_model(copy, *inter, ic);
            } else {
                res = train_prompt(bb, initial_prompt(bb, cfg.prompt_length, cfg.seed, tok.vocab_size()), *inter, ic);
            }
            done = res.checkpoints.back();
            save_checkpoint(*done, stage_path(dir, done->step));
        }
        if (model_tuning) {
            tuned = done->backbone();
        } else {
            prompt_init = done->prompt("prompt");
        }
        extra["intermediate_loss"] = done->loss;
    }

    if (is_fp(r)) {
        const auto langs = corpus_languages(cfg.factorized_languages, "factorized_languages");
        for (const auto& l : {cfg.source_language, cfg.target_language}) {
            if (std::find(langs.begin(), langs.end(), l) == langs.end()) {
                throw ConfigError("factorized_languages must include '" + l + "'");
            }
        }
        std::map<std::string, std::vector<TokenIds>> fp_docs;
        for (const auto& l : langs) {
            fp_docs[l] = corpus_ids.at(l);
        }
        MultiTaskStream fp_stream(fp_docs, all_tasks(), tp, Rng::derive(cfg.seed, "factorized"));
        TrainConfig fc = tc;
        fc.steps = cfg.factorized_steps;
        fc.checkpoint_every = 0;
        fc.optimizer.lr = cfg.factorized_lr;
        json stage{{"languages", langs}, {"sub_prompt_length", cfg.sub_prompt_length}, {"steps", fc.steps},
                   {"lr", fc.optimizer.lr}, {"corpus", inputs["corpus"]["hash"]}, {"seed", cfg.seed},
                   {"backbone", bb.fingerprint()}, {"optimizer", cfg.optimizer}, {"clip_norm", cfg.clip_norm},
                   {"batch_size", cfg.batch_size}, {"prefix_n", cfg.prefix_n}};
        fc.data_hash = hash_bytes(stage.dump());
        const std::string dir = (ckpt_dir / "factorized").string();
        fs::create_directories(dir);
        std::optional<Checkpoint> done = reusable_stage(dir, fc.steps, fc.data_hash);
        if (!done) {
            auto res = train_factorized(bb, langs, all_tasks(), fp_stream, fc, cfg.sub_prompt_length, 0.5);
            done = res.checkpoints.back();
            save_checkpoint(*done, stage_path(dir, done->step));
        }
        const FactorizedPrompts fps = factorized_from_checkpoint(*done);
        main_run = train_downstream_task_half(bb, fps.language.at(cfg.source_language),
                                              fps.task.at(task_name(TaskKind::span_corruption)), *stream, tc);
        const Prompt eval_half = fps.language.at(r == "fp" ? cfg.target_language : cfg.source_language);
        prompt_for = [eval_half](const Checkpoint& c) {
            return std::optional<Prompt>(compose_prompt(FactorizedPrompt{eval_half, c.prompt("task")}));
        };
        const SimilarityMatrix sim = prompt_similarity_matrix(fps.language);
        export_heatmap(sim, cluster_leaf_order(sim), (out / "heatmap.svg").string(), (out / "matrix.csv").string());
        extra["factorized_loss"] = done->loss;
        extra["inference_language_half"] = r == "fp" ? cfg.target_language : cfg.source_language;
    } else if (model_tuning) {
        Backbone copy = tuned ? *tuned : bb;
        copy.unfreeze();
        main_run = train_model(copy, *stream, tc);
    } else {
        Prompt init = prompt_init ? *prompt_init : initial_prompt(bb, cfg.prompt_length, cfg.seed, tok.vocab_size());
        main_run = train_prompt(bb, std::move(init), *stream, tc);
    }
    if (const auto* mix = dynamic_cast<const Mixture*>(stream.get())) {
        extra["unsup_draws"] = mix->unsup_draws();
        extra["main_draws"] = mix->main_draws();
    }

    json outputs = json::object();
    for (const auto& c : main_run.checkpoints) {
        const std::string name = checkpoint_filename(c.step);
        const std::string bytes = serialize_checkpoint(c);
        write_file((ckpt_dir / name).string(), bytes);
        outputs["checkpoints/" + name] = hash_bytes(bytes);
    }

    DecodeConfig dc{cfg.beam_size, cfg.length_penalty_alpha, cfg.max_decode_len};
    EvalContext ctx;
    ctx.tokenizer = &tok;
    ctx.lid = &lid;
    ctx.target_language = cfg.target_language;
    ctx.source_language = cfg.source_language;
    ctx.trim = cfg.trim;
    ctx.predict = cached(model_predictor(&bb, tok, dc, prompt_for));

    const std::vector<SummExample> val(validation.begin(),
                                       validation.begin() + static_cast<std::ptrdiff_t>(
                                                                std::min(validation.size(), kValidationExamples)));
    std::map<std::string, std::vector<SummExample>> eval_sets{{cfg.target_language, val}};
    if (!cfg.source_validation.empty()) {
        eval_sets[cfg.source_language] = load_split(cfg.source_validation, "source validation set");
    }

    RecipeResult result;
    result.output_dir = cfg.output_dir;
    result.checkpoints = main_run.checkpoints;
    result.curves = learning_curves(main_run.checkpoints, eval_sets, ctx);
    const std::string curves = curves_csv(result.curves);
    write_file((out / "curves.csv").string(), curves);
    outputs["curves.csv"] = hash_bytes(curves);

    const Selection sel = select_checkpoint(main_run.checkpoints, val, ctx);
    result.selected = sel.index;
    const Checkpoint& best = main_run.checkpoints[sel.index];
    result.test_report = evaluate_checkpoint(best, test, ctx);

    std::vector<Prediction> lead_preds;
    std::vector<std::string> refs;
    for (const auto& ex : test) {
        lead_preds.push_back({lead_n(ex, tok), cfg.target_language});
        refs.push_back(ex.summary);
    }
    EvalOptions lead_opts;
    lead_opts.trim = cfg.trim;
    lead_opts.source_language = cfg.source_language;
    const EvalReport lead = corpus_eval(lead_preds, refs, tok, lid, lead_opts);
    result.lead_lsum = lead.per_language.at(cfg.target_language).sp_rg_lsum;

    std::vector<std::int64_t> steps;
    for (const auto& c : main_run.checkpoints) {
        steps.push_back(c.step);
    }
    json report{{"recipe", r},
                {"target_language", cfg.target_language},
                {"source_language", cfg.source_language},
                {"tuning", is_fp(r) ? "prompt" : (model_tuning ? "model" : "prompt")},
                {"checkpoint_steps", steps},
                {"selected_step", best.step},
                {"selection_scores", sel.scores},
                {"final_loss", main_run.losses.empty() ? 0.0 : main_run.losses.back()},
                {"test", json::parse(result.test_report.to_json())},
                {"lead64", scores_json(lead.per_language.at(cfg.target_language))},
                {"details", extra}};
    const std::string report_text = report.dump(2) + "\n";
    write_file((out / "report.json").string(), report_text);
    outputs["report.json"] = hash_bytes(report_text);
    if (is_fp(r)) {
        outputs["heatmap.svg"] = hash_file((out / "heatmap.svg").string());
        outputs["matrix.csv"] = hash_file((out / "matrix.csv").string());
    }

    json manifest{{"recipe", r},
                  {"config_hash", cfg.hash()},
                  {"inputs", inputs},
                  {"tokenizer_fingerprint", tok.fingerprint()},
                  {"backbone_fingerprint", bb.fingerprint()},
                  {"backbone_config_hash", bb.config().hash()},
                  {"outputs", outputs},
                  {"validation_sampling", "first " + std::to_string(kValidationExamples) + " in file order"}};
    write_file((out / "manifest.json").string(), manifest.dump(2) + "\n");
    return result;
}

std::string LabConfig::to_json() const {
    json j{{"seed", seed},
           {"docs_per_language", docs_per_language},
           {"vocab_size", vocab_size},
           {"lid_ngrams", lid_ngrams},
           {"pretrain_languages", pretrain_languages},
           {"pretrain_tasks", pretrain_tasks},
           {"backbone", json::parse(backbone.to_json())},
           {"pretrain_steps", pretrain_steps},
           {"pretrain_batch", pretrain_batch},
           {"pretrain_lr", pretrain_lr},
           {"prefix_n", prefix_n},
           {"source_language", source_language},
           {"target_languages", target_languages},
           {"train_examples", train_examples},
           {"validation_examples", validation_examples},
           {"test_examples", test_examples}};
    return j.dump(2) + "\n";
}

LabConfig LabConfig::from_json(std::string_view text) {
    json j = parse_json(LabConfig{}.to_json(), "defaults");
    const json in = parse_json(text, "lab config");
    merge_known(j, in, "lab config");
    LabConfig c;
    c.seed = get_seed(j, "seed");
    c.docs_per_language = get<int>(j, "docs_per_language");
    c.vocab_size = get<int>(j, "vocab_size");
    c.lid_ngrams = get<int>(j, "lid_ngrams");
    c.pretrain_languages = get<std::vector<std::string>>(j, "pretrain_languages");
    c.pretrain_tasks = get<std::vector<std::string>>(j, "pretrain_tasks");
    {
        // vocab_size stays 0 here; prepare_lab fills it in from the trained tokenizer
        json b = j.at("backbone");
        const int vocab = b.value("vocab_size", 0);
        if (vocab == 0) {
            b["vocab_size"] = 1;
        }
        c.backbone = BackboneConfig::from_json(b.dump());
        c.backbone.vocab_size = vocab;
    }
    c.pretrain_steps = get<int>(j, "pretrain_steps");
    c.pretrain_batch = get<int>(j, "pretrain_batch");
    c.pretrain_lr = get<double>(j, "pretrain_lr");
    c.prefix_n = get<int>(j, "prefix_n");
    c.source_language = get<std::string>(j, "source_language");
    c.target_languages = get<std::vector<std::string>>(j, "target_languages");
    c.train_examples = get<int>(j, "train_examples");
    c.validation_examples = get<int>(j, "validation_examples");
    c.test_examples = get<int>(j, "test_examples");
    return c;
}

std::string LabPaths::validation(const std::string& lang) const { return (fs::path(dir) / ("val-" + lang + ".jsonl")).string(); }
std::string LabPaths::test(const std::string& lang) const { return (fs::path(dir) / ("test-" + lang + ".jsonl")).string(); }

LabPaths prepare_lab(const LabConfig& cfg, const std::string& dir, const std::function<void(const std::string&)>& log) {
    auto say = [&](const std::string& msg) {
        if (log) {
            log(msg);
        }
    };
    const fs::path d(dir);
    fs::create_directories(d);
    LabPaths p;
    p.dir = dir;
    p.specs = (d / "languages.json").string();
    p.corpus = (d / "corpus.jsonl").string();
    p.tokenizer = (d / "tokenizer.model").string();
    p.lid = (d / "lid.json").string();
    p.backbone = (d / "backbone.ckpt").string();
    p.train = (d / ("train-" + cfg.source_language + ".jsonl")).string();
    p.source_validation = p.validation(cfg.source_language);

    const std::string lab_json = cfg.to_json();
    const std::string lab_path = (d / "lab.json").string();
    const bool same = fs::exists(lab_path) && read_file(lab_path) == lab_json;
    auto have = [&](const std::string& path) { return same && fs::exists(path); };
    if (!same) {
        // Stale artifacts from another configuration must not be reused.
        for (const auto& f : {p.specs, p.corpus, p.tokenizer, p.lid, p.backbone}) {
            fs::remove(f);
        }
        write_file(lab_path, lab_json);
    }

    const auto specs = default_language_specs(cfg.seed);
    auto spec_of = [&](const std::string& name) -> const SynthLangSpec& {
        for (const auto& s : specs) {
            if (s.name == name) {
                return s;
            }
        }
        throw ConfigError("lab config names unknown language '" + name + "'");
    };
    if (!have(p.specs)) {
        save_language_specs(specs, p.specs);
    }
    std::map<std::string, std::vector<Document>> docs;
    if (!have(p.corpus)) {
        say("generating corpus");
        docs = gen_synthetic_multilingual(specs, cfg.docs_per_language, cfg.seed + 1);
        std::vector<Document> all;
        for (const auto& [l, ds] : docs) {
            all.insert(all.end(), ds.begin(), ds.end());
        }
        write_documents(all, p.corpus);
    } else {
        for (auto& doc : load_documents(p.corpus).records) {
            docs[doc.language].push_back(std::move(doc));
        }
    }
    SubwordModel tok;
    if (!have(p.tokenizer)) {
        say("training tokenizer");
        std::vector<std::string> texts;
        for (const auto& [l, ds] : docs) {
            for (const auto& doc : ds) {
                texts.push_back(doc.text);
            }
        }
        tok = train_subword(texts, cfg.vocab_size, cfg.seed);
        tok.save(p.tokenizer);
    } else {
        tok = SubwordModel::load(p.tokenizer);
    }
    if (!have(p.lid)) {
        say("training LID model");
        train_lid(docs, cfg.lid_ngrams, cfg.seed).save(p.lid);
    }
    if (!have(p.backbone)) {
        BackboneConfig bc = cfg.backbone;
        bc.vocab_size = tok.num_ids();
        Backbone bb = Backbone::init(bc, cfg.seed);
        std::map<std::string, std::vector<TokenIds>> ids;
        for (const auto& l : cfg.pretrain_languages) {
            spec_of(l);
            for (const auto& doc : docs.at(l)) {
                ids[l].push_back(tok.encode(doc.text));
            }
        }
        TaskParams tp;
        tp.sentinel_base = tok.vocab_size();
        tp.prefix_n = cfg.prefix_n;
        std::vector<TaskKind> kinds;
        for (const auto& t : cfg.pretrain_tasks) {
            kinds.push_back(parse_task(t));
        }
        MultiTaskStream stream(ids, kinds, tp, cfg.seed + 4);
        TrainConfig tc;
        tc.steps = cfg.pretrain_steps;
        tc.batch_size = cfg.pretrain_batch;
        tc.seed = cfg.seed;
        tc.optimizer.kind = "adam";
        tc.optimizer.lr = cfg.pretrain_lr;
        tc.optimizer.clip_norm = 1.0;
        tc.data_hash = hash_file(p.corpus);
        const auto res = pretrain_backbone(bb, stream, tc, nullptr, [&](std::int64_t s, double loss) {
            if (s % 1000 == 0) {
                say("pretrain step " + std::to_string(s) + " loss " + format_real(loss));
            }
        });
        save_checkpoint(res.checkpoints.back(), p.backbone);
    }
    auto split = [&](const std::string& path, const std::string& lang, int n, const std::string& label) {
        if (!have(path)) {
            write_summ_examples(gen_toy_summarization(spec_of(lang), n, Rng::derive(cfg.seed, label + "/" + lang)),
                                path);
        }
    };
    split(p.train, cfg.source_language, cfg.train_examples, "train");
    split(p.source_validation, cfg.source_language, cfg.validation_examples, "validation");
    for (const auto& l : cfg.target_languages) {
        split(p.validation(l), l, cfg.validation_examples, "validation");
        split(p.test(l), l, cfg.test_examples, "test");
    }
    return p;
}

RecipeConfig lab_recipe(const LabPaths& lab, const std::string& recipe, const std::string& target_language,
                        const std::string& output_dir) {
    RecipeConfig c;
    c.recipe = recipe;
    c.tokenizer = lab.tokenizer;
    c.lid = lab.lid;
    c.backbone = lab.backbone;
    c.corpus = lab.corpus;
    c.train = lab.train;
    c.validation = lab.validation(target_language);
    c.test = lab.test(target_language);
    c.source_validation = lab.source_validation;
    c.target_language = target_language;
    c.output_dir = output_dir;
    return c;
}

} // namespace xgkit
