#include "xgkit/cli.hpp"

#include "xgkit/analysis.hpp"
#include "xgkit/errors.hpp"
#include "xgkit/fileio.hpp"
#include "xgkit/hash.hpp"
#include "xgkit/recipes.hpp"
#include "xgkit/textops.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

namespace xgkit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "xgkit 1.0";

struct Command;
using Handler = std::function<void(const Command&, const json&, std::ostream&)>;

struct Command {
    std::string name;
    std::string help;
    json defaults;                     // flat keys; the JSON type fixes how a flag is parsed
    std::vector<std::string> required; // keys that must end up non-empty
    std::vector<std::string> inputs;   // keys naming input files, hashed into the manifest
    Handler run;
    bool positional_name = false; // recipe NAME
};

std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

// ---- resolved-config accessors ------------------------------------------

std::string str(const json& c, const char* k) { return c.at(k).get<std::string>(); }
int num(const json& c, const char* k) { return c.at(k).get<int>(); }
double real(const json& c, const char* k) { return c.at(k).get<double>(); }
bool flag(const json& c, const char* k) { return c.at(k).get<bool>(); }
std::uint64_t seed_of(const json& c) { return c.at("seed").get<std::uint64_t>(); }
std::vector<std::string> list(const json& c, const char* k) { return c.at(k).get<std::vector<std::string>>(); }

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        if (!cur.empty()) {
            out.push_back(cur);
        }
    }
    return out;
}

json parse_flag_value(const std::string& key, const json& def, const std::string& raw) {
    auto bad = [&](const char* what) {
        return UsageError("--" + dashed(key) + " expects " + what + ", got '" + raw + "'");
    };
    if (def.is_array()) {
        return json(split_list(raw));
    }
    if (def.is_number_unsigned() || def.is_number_integer()) {
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(raw, &used);
        } catch (const std::exception&) {
            throw bad("an integer");
        }
        if (used != raw.size()) {
            throw bad("an integer");
        }
        if (key == "seed") {
            if (v < 0) {
                throw bad("a non-negative integer");
            }
            return json(static_cast<std::uint64_t>(v));
        }
        return json(v);
    }
    if (def.is_number_float()) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(raw, &used);
        } catch (const std::exception&) {
            throw bad("a number");
        }
        if (used != raw.size()) {
            throw bad("a number");
        }
        return json(v);
    }
    return json(raw);
}

void check_type(const std::string& key, const json& def, const json& v, const std::string& where) {
    const bool ok = (def.is_string() && v.is_string()) || (def.is_boolean() && v.is_boolean()) ||
                    (def.is_array() && v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); })) ||
                    (def.is_number_float() && v.is_number()) ||
                    ((def.is_number_integer() || def.is_number_unsigned()) && v.is_number_integer());
    if (!ok) {
        throw ConfigError(where + ": key '" + key + "' has the wrong type");
    }
    if (key == "seed" && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
        throw ConfigError(where + ": seed must be non-negative");
    }
}

// ---- file helpers -------------------------------------------------------

// One text per line; backslash and newline are escaped so multi-line
// predictions survive.
std::string escape_line(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '\\') {
            o += "\\\\";
        } else if (c == '\n') {
            o += "\\n";
        } else if (c == '\r') {
            o += "\\r";
        } else {
            o += c;
        }
    }
    return o;
}

std::string unescape_line(const std::string& s) {
    std::string o;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            const char n = s[++i];
            o += n == 'n' ? '\n' : n == 'r' ? '\r' : n;
        } else {
            o += s[i];
        }
    }
    return o;
}

std::vector<std::string> read_lines(const std::string& path) {
    const std::string text = read_file(path);
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        out.push_back(unescape_line(line));
    }
    return out;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::string text;
    for (const auto& l : lines) {
        text += escape_line(l) + "\n";
    }
    write_file(path, text);
}

void ensure_parent(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) {
        fs::create_directories(parent);
    }
}

void need_file(const std::string& path, const std::string& key) {
    if (!fs::exists(path)) {
        throw IoError("--" + dashed(key) + ": no such file '" + path + "'");
    }
}

std::map<std::string, std::vector<Document>> load_corpus(const std::string& path) {
    std::map<std::string, std::vector<Document>> docs;
    for (auto& d : load_documents(path).records) {
        docs[d.language].push_back(std::move(d));
    }
    if (docs.empty()) {
        throw InputError("corpus '" + path + "' has no documents");
    }
    return docs;
}

std::vector<SynthLangSpec> specs_from(const json& c) {
    const std::string path = str(c, "specs");
    return path.empty() ? default_language_specs(seed_of(c)) : load_language_specs(path);
}

Backbone load_backbone(const std::string& path) {
    const Checkpoint c = load_checkpoint(path);
    if (c.kind != "backbone") {
        throw InputError("'" + path + "' holds a " + c.kind + " checkpoint, not a backbone");
    }
    Backbone bb = c.backbone();
    bb.freeze();
    return bb;
}

void check_vocab(const Backbone& bb, const SubwordModel& tok) {
    if (bb.config().vocab_size != tok.num_ids()) {
        throw InputError("backbone id space (" + std::to_string(bb.config().vocab_size) +
                         ") does not match the tokenizer (" + std::to_string(tok.num_ids()) + ")");
    }
}

TrainConfig train_config(const json& c, const std::string& out_dir) {
    TrainConfig tc;
    tc.steps = num(c, "steps");
    tc.batch_size = num(c, "batch_size");
    tc.checkpoint_every = num(c, "checkpoint_every");
    tc.seed = seed_of(c);
    tc.optimizer.kind = str(c, "optimizer");
    tc.optimizer.lr = real(c, "lr");
    tc.optimizer.clip_norm = real(c, "clip_norm");
    tc.dump_path = (fs::path(out_dir) / "nonfinite-dump.json").string();
    tc.validate();
    return tc;
}

std::optional<Checkpoint> resume_from(const json& c) {
    const std::string path = str(c, "resume");
    if (path.empty()) {
        return std::nullopt;
    }
    return load_checkpoint(path);
}

void save_run(const std::string& out_dir, const std::vector<Checkpoint>& ckpts, std::ostream& out) {
    const fs::path dir = fs::path(out_dir) / "checkpoints";
    fs::create_directories(dir);
    for (const auto& c : ckpts) {
        save_checkpoint(c, (dir / checkpoint_filename(c.step)).string());
    }
    if (!ckpts.empty()) {
        out << "wrote " << ckpts.size() << " checkpoint(s) to " << dir.string() << ", final loss "
            << format_real(ckpts.back().loss) << "\n";
    }
}

std::vector<Checkpoint> load_checkpoint_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw IoError("no checkpoint directory '" + dir + "'");
    }
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("ckpt-", 0) == 0) {
            files.push_back(e.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw InputError("no checkpoints in '" + dir + "'");
    }
    std::vector<Checkpoint> out;
    for (const auto& f : files) {
        out.push_back(load_checkpoint(f));
    }
    return out;
}

// The prompt a checkpoint decodes with. Task-half checkpoints use their own
// language half unless another one is named from a factorized checkpoint.
PromptSource prompt_source(const json& c) {
    std::shared_ptr<FactorizedPrompts> fps;
    if (!str(c, "factorized").empty()) {
        fps = std::make_shared<FactorizedPrompts>(factorized_from_checkpoint(load_checkpoint(str(c, "factorized"))));
    }
    const std::string half = str(c, "language_half");
    if (!half.empty() && !fps) {
        throw UsageError("--language-half needs --factorized");
    }
    if (fps && !half.empty() && !fps->language.count(half)) {
        throw InputError("factorized checkpoint has no language half '" + half + "'");
    }
    return [fps, half](const Checkpoint& ck) -> std::optional<Prompt> {
        if (ck.kind == "prompt") {
            return ck.prompt("prompt");
        }
        if (ck.kind == "task_half") {
            const Prompt& lang = half.empty() ? ck.prompt("language") : fps->language.at(half);
            return compose_prompt(FactorizedPrompt{lang, ck.prompt("task")});
        }
        if (ck.kind == "backbone") {
            return std::nullopt;
        }
        throw InputError("cannot decode with a " + ck.kind + " checkpoint directly");
    };
}

// ---- commands ------------------------------------------------------------

void cmd_gen_corpus(const Command&, const json& c, std::ostream& out) {
    auto specs = specs_from(c);
    const auto wanted = list(c, "languages");
    if (!wanted.empty()) {
        std::vector<SynthLangSpec> kept;
        for (const auto& w : wanted) {
            const auto it = std::find_if(specs.begin(), specs.end(), [&](const SynthLangSpec& s) { return s.name == w; });
            if (it == specs.end()) {
                throw ConfigError("unknown language '" + w + "'");
            }
            kept.push_back(*it);
        }
        specs = kept;
    }
    const auto docs = gen_synthetic_multilingual(specs, num(c, "docs_per_lang"), seed_of(c));
    std::vector<Document> all;
    for (const auto& [l, ds] : docs) {
        all.insert(all.end(), ds.begin(), ds.end());
    }
    ensure_parent(str(c, "out"));
    write_documents(all, str(c, "out"));
    if (!str(c, "specs_out").empty()) {
        save_language_specs(specs, str(c, "specs_out"));
    }
    out << "wrote " << all.size() << " documents in " << docs.size() << " languages\n";
}

void cmd_gen_summ(const Command&, const json& c, std::ostream& out) {
    const auto specs = specs_from(c);
    const std::string lang = str(c, "lang");
    const auto it = std::find_if(specs.begin(), specs.end(), [&](const SynthLangSpec& s) { return s.name == lang; });
    if (it == specs.end()) {
        throw ConfigError("unknown language '" + lang + "'");
    }
    const auto data = gen_toy_summarization(*it, num(c, "n"), seed_of(c));
    ensure_parent(str(c, "out"));
    write_summ_examples(data, str(c, "out"));
    out << "wrote " << data.size() << " examples\n";
}

void cmd_tokenizer_train(const Command&, const json& c, std::ostream& out) {
    std::vector<std::string> texts;
    for (const auto& d : load_documents(str(c, "corpus")).records) {
        texts.push_back(d.text);
    }
    if (texts.empty()) {
        throw InputError("corpus has no documents");
    }
    const SubwordModel m = train_subword(texts, num(c, "vocab_size"), seed_of(c));
    ensure_parent(str(c, "out"));
    m.save(str(c, "out"));
    out << "trained " << m.vocab_size() << " pieces (" << m.num_merges() << " merges)\n";
}

void cmd_build_tasks(const Command&, const json& c, std::ostream& out) {
    const SubwordModel tok = SubwordModel::load(str(c, "tokenizer"));
    TaskParams tp;
    tp.sentinel_base = tok.vocab_size();
    tp.prefix_n = num(c, "prefix_n");
    const TaskKind kind = parse_task(str(c, "task"));
    const std::string lang = str(c, "lang");
    Rng rng(seed_of(c));
    std::string text;
    std::size_t built = 0;
    std::size_t skipped = 0;
    for (const auto& d : load_documents(str(c, "in")).records) {
        if (d.language != lang) {
            continue;
        }
        const auto ex = build_task(kind, tok.encode(d.text), rng, tp);
        if (!ex) {
            ++skipped;
            continue;
        }
        json j{{"inputs", ex->inputs}, {"targets", ex->targets}, {"task", ex->task}, {"language", lang}};
        text += j.dump() + "\n";
        ++built;
    }
    if (str(c, "out").empty()) {
        out << text;
    } else {
        ensure_parent(str(c, "out"));
        write_file(str(c, "out"), text);
        out << "built " << built << " examples, skipped " << skipped << "\n";
    }
}

void cmd_lid_train(const Command&, const json& c, std::ostream& out) {
    const LidModel m = train_lid(load_corpus(str(c, "corpus")), num(c, "max_ngrams"), seed_of(c));
    ensure_parent(str(c, "out"));
    m.save(str(c, "out"));
    out << "trained LID over " << m.languages().size() << " languages, " << m.vocabulary_size() << " n-grams\n";
}

json lid_eval_json(const json& c) {
    const LidModel m = LidModel::load(str(c, "model"));
    std::map<std::string, std::pair<std::size_t, std::size_t>> per; // language -> (correct, total)
    double conf = 0.0;
    std::size_t correct = 0;
    std::size_t n = 0;
    for (const auto& d : load_documents(str(c, "in")).records) {
        const Detection det = m.detect(d.text);
        auto& p = per[d.language];
        ++p.second;
        ++n;
        if (det.language == d.language) {
            ++p.first;
            ++correct;
        }
        conf += det.confidence;
    }
    if (n == 0) {
        throw InputError("no documents to evaluate");
    }
    json by = json::object();
    for (const auto& [l, p] : per) {
        by[l] = {{"n", p.second}, {"accuracy", static_cast<double>(p.first) / static_cast<double>(p.second)}};
    }
    return {{"n", n},
            {"accuracy", static_cast<double>(correct) / static_cast<double>(n)},
            {"mean_confidence", conf / static_cast<double>(n)},
            {"per_language", by}};
}

void emit_json(const json& c, json report, std::ostream& out) {
    report["config"] = c;
    const std::string text = report.dump(2) + "\n";
    if (c.contains("out") && !str(c, "out").empty()) {
        ensure_parent(str(c, "out"));
        write_file(str(c, "out"), text);
    } else {
        out << text;
    }
}

void cmd_lid_eval(const Command&, const json& c, std::ostream& out) { emit_json(c, lid_eval_json(c), out); }

void cmd_rouge(const Command&, const json& c, std::ostream& out) {
    const SubwordModel tok = SubwordModel::load(str(c, "tokenizer"));
    const auto refs = read_lines(str(c, "refs"));
    const auto preds = read_lines(str(c, "preds"));
    if (refs.size() != preds.size()) {
        throw InputError("refs has " + std::to_string(refs.size()) + " lines but preds has " +
                         std::to_string(preds.size()));
    }
    if (refs.empty()) {
        throw InputError("no lines to score");
    }
    double r1 = 0, r2 = 0, rl = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const std::string cand = flag(c, "trim") ? trim_trailing_repeats(preds[i]).first : preds[i];
        const SpRouge s = sp_rouge(tok, refs[i], cand);
        r1 += s.r1.f1;
        r2 += s.r2.f1;
        rl += s.lsum.f1;
    }
    const double n = static_cast<double>(refs.size());
    emit_json(c, {{"n", refs.size()}, {"sp_rg_1", 100.0 * r1 / n}, {"sp_rg_2", 100.0 * r2 / n}, {"sp_rg_lsum", 100.0 * rl / n}},
              out);
}

void cmd_correlate(const Command&, const json& c, std::ostream& out) {
    std::vector<double> xs, ys;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(str(c, "scores"))) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto comma = line.find(',');
        const std::string a = line.substr(0, comma);
        const std::string b = comma == std::string::npos ? "" : line.substr(comma + 1);
        try {
            std::size_t ua = 0, ub = 0;
            const double x = std::stod(a, &ua);
            const double y = std::stod(b, &ub);
            if (ua != a.size() || ub != b.size()) {
                throw std::invalid_argument("trailing text");
            }
            xs.push_back(x);
            ys.push_back(y);
        } catch (const std::exception&) {
            if (line_no == 1) {
                continue; // header
            }
            throw FormatError(str(c, "scores") + ":" + std::to_string(line_no) + ": expected two numbers");
        }
    }
    emit_json(c, {{"n", xs.size()}, {"pearson", pearson(xs, ys)}}, out);
}

void cmd_trim(const Command&, const json& c, std::ostream& out) {
    std::vector<std::string> trimmed;
    std::string tsv = "line\toriginal_len\ttrimmed_len\tremoved_unit\trepetitions_removed\n";
    std::size_t changed = 0;
    std::size_t i = 0;
    for (const auto& line : read_lines(str(c, "in"))) {
        auto [text, rep] = trim_trailing_repeats(line);
        tsv += std::to_string(++i) + "\t" + std::to_string(rep.original_len) + "\t" + std::to_string(rep.trimmed_len) +
               "\t" + escape_line(rep.removed_unit) + "\t" + std::to_string(rep.repetitions_removed) + "\n";
        changed += rep.repetitions_removed > 0 ? 1 : 0;
        trimmed.push_back(std::move(text));
    }
    ensure_parent(str(c, "out"));
    write_lines(str(c, "out"), trimmed);
    write_file(str(c, "report"), tsv);
    out << "trimmed " << changed << " of " << trimmed.size() << " lines\n";
}

void cmd_lead(const Command&, const json& c, std::ostream& out) {
    const SubwordModel tok = SubwordModel::load(str(c, "tokenizer"));
    if (num(c, "n") < 1) {
        throw ConfigError("n must be positive");
    }
    std::vector<std::string> preds;
    for (const auto& ex : load_summ_examples(str(c, "in")).records) {
        preds.push_back(lead_n(ex, tok, num(c, "n")));
    }
    ensure_parent(str(c, "out"));
    write_lines(str(c, "out"), preds);
    out << "wrote " << preds.size() << " lead-" << num(c, "n") << " predictions\n";
}

void cmd_pretrain(const Command&, const json& c, std::ostream& out) {
    const SubwordModel tok = SubwordModel::load(str(c, "tokenizer"));
    const auto docs = load_corpus(str(c, "corpus"));
    BackboneConfig bc;
    bc.d_model = num(c, "d_model");
    bc.n_heads = num(c, "n_heads");
    bc.n_enc_layers = num(c, "enc_layers");
    bc.n_dec_layers = num(c, "dec_layers");
    bc.ffn_dim = num(c, "ffn_dim");
    bc.max_len = num(c, "max_len");
    bc.tie_embeddings = !flag(c, "untied");
    bc.vocab_size = tok.num_ids();
    bc.validate();
    std::map<std::string, std::vector<TokenIds>> ids;
    for (const auto& l : list(c, "languages")) {
        if (!docs.count(l)) {
            throw InputError("corpus has no documents in '" + l + "'");
        }
        for (const auto& d : docs.at(l)) {
            ids[l].push_back(tok.encode(d.text));
        }
    }
    std::vector<TaskKind> tasks;
    for (const auto& t : list(c, "tasks")) {
        tasks.push_back(parse_task(t));
    }
    TaskParams tp;
    tp.sentinel_base = tok.vocab_size();
    tp.prefix_n = num(c, "prefix_n");
    MultiTaskStream stream(ids, tasks, tp, Rng::derive(seed_of(c), "pretrain-data"));
    TrainConfig tc = train_config(c, str(c, "out_dir"));
    tc.data_hash = hash_file(str(c, "corpus"));
    fs::create_directories(str(c, "out_dir"));
    const auto resume = resume_from(c);
    Backbone bb = Backbone::init(bc, seed_of(c));
    const auto res = pretrain_backbone(bb, stream, tc, resume ? &*resume : nullptr);
    save_run(str(c, "out_dir"), res.checkpoints, out);
    save_checkpoint(res.checkpoints.back(), (fs::path(str(c, "out_dir")) / "backbone.ckpt").string());
}

std::vector<TaskExample> summ_train(const json& c, const SubwordModel& tok, const Backbone& bb) {
    const auto data = load_summ_examples(str(c, "train")).records;
    if (data.empty()) {
        throw InputError("training set '" + str(c, "train") + "' is empty");
    }
    return summarization_examples(data, tok, bb.config());
}

void cmd_prompt_tune(const Command&, const json& c, std::ostream& out) {
    const SubwordModel tok = SubwordModel::load(str(c, "tokenizer"));
    const Backbone bb = load_backbone(str(c, "backbone"));
    check_vocab(bb, tok);
    TrainConfig tc = train_config(c, str(c, "out_dir"));
    tc.data_hash = hash_file(str(c, "train"));
    ListStream stream(summ_train(c, tok, bb), seed_of(c));
    fs::create_directories(str(c, "out_dir"));
    const auto resume = resume_from(c);
    const auto res = train_prompt(bb, initial_prompt(bb, num(c, "prompt_length"), seed_of(c), tok.vocab_size()), stream,
                                  tc, resume ? &*resume : nullptr);
    save_run(str(c, "out_dir"), res.checkpoints, out);
}

void cmd_model_tune(const Command&, const json& c, std::ostream& out) {
    const SubwordModel tok = SubwordModel::load(str(c, "tokenizer"));
    Backbone bb = load_backbone(str(c, "backbone"));
    check_vocab(bb, tok);
    bb.unfreeze();
    TrainConfig tc = train_config(c, str(c, "out_dir"));
    tc.data_hash = hash_file(str(c, "train"));
    ListStream stream(summ_train(c, tok, bb), seed_of(c));
    fs::create_directories(str(c, "out_dir"));
    const auto resume = resume_from(c);
    const auto res = train_model(bb, stream, tc, resume ? &*resume : nullptr);
    save_run(str(c, "out_dir"), res.checkpoints, out);
}

void cmd_factorized_train(const Command&, const json& c, std::ostream& out) {
    const SubwordModel tok = SubwordModel::load(str(c, "tokenizer"));
    const Backbone bb = load_backbone(str(c, "backbone"));
    check_vocab(bb, tok);
    const auto docs = load_corpus(str(c, "corpus"));
    std::vector<std::string> langs = list(c, "languages");
    if (langs.empty()) {
        for (const auto& [l, ds] : docs) {
            langs.push_back(l);
        }
    }
    std::map<std::string, std::vector<TokenIds>> ids;
    for (const auto& l : langs) {
        if (!docs.count(l)) {
            throw InputError("corpus has no documents in '" + l + "'");
        }
        for (const auto& d : docs.at(l)) {
            ids[l].push_back(tok.encode(d.text));
        }
    }
    TaskParams tp;
    tp.sentinel_base = tok.vocab_size();
    tp.prefix_n = num(c, "prefix_n");
    MultiTaskStream stream(ids, all_tasks(), tp, Rng::derive(seed_of(c), "factorized"));
    TrainConfig tc = train_config(c, str(c, "out_dir"));
    tc.data_hash = hash_file(str(c, "corpus"));
    fs::create_directories(str(c, "out_dir"));
    const auto resume = resume_from(c);
    const auto res = train_factorized(bb, langs, all_tasks(), stream, tc, num(c, "sub_prompt_length"),
                                      real(c, "init_scale"), resume ? &*resume : nullptr);
    save_run(str(c, "out_dir"), res.checkpoints, out);
    out << "trainable parameters: " << res.prompts.trainable_parameters() << "\n";
}

void cmd_downstream_train(const Command&, const json& c, std::ostream& out) {
    const SubwordModel tok = SubwordModel::load(str(c, "tokenizer"));
    const Backbone bb = load_backbone(str(c, "backbone"));
    check_vocab(bb, tok);
    const FactorizedPrompts fps = factorized_from_checkpoint(load_checkpoint(str(c, "factorized")));
    const std::string lang = str(c, "language");
    const std::string task = str(c, "task_init");
    if (!fps.language.count(lang)) {
        throw InputError("factorized checkpoint has no language half '" + lang + "'");
    }
    if (!fps.task.count(task)) {
        throw InputError("factorized checkpoint has no task half '" + task + "'");
    }
    TrainConfig tc = train_config(c, str(c, "out_dir"));
    tc.data_hash = hash_file(str(c, "train"));
    ListStream stream(summ_train(c, tok, bb), seed_of(c));
    fs::create_directories(str(c, "out_dir"));
    const auto resume = resume_from(c);
    const auto res = train_downstream_task_half(bb, fps.language.at(lang), fps.task.at(task), stream, tc,
                                                resume ? &*resume : nullptr);
    save_run(str(c, "out_dir"), res.checkpoints, out);
}

DecodeConfig decode_config(const json& c) {
    DecodeConfig dc{num(c, "beam_size"), real(c, "alpha"), num(c, "max_len")};
    dc.validate();
    return dc;
}

void cmd_decode(const Command&, const json& c, std::ostream& out) {
    const SubwordModel tok = SubwordModel::load(str(c, "tokenizer"));
    const Backbone bb = load_backbone(str(c, "backbone"));
    check_vocab(bb, tok);
    const auto data = load_summ_examples(str(c, "in")).records;
    const auto predict = model_predictor(&bb, tok, decode_config(c), prompt_source(c));
    Checkpoint none;
    none.kind = "prompt-free";
    none.backbone_fingerprint = bb.fingerprint();
    std::vector<std::string> preds;
    if (str(c, "checkpoint").empty()) {
        preds = predict_summaries(bb, nullptr, data, tok, decode_config(c));
    } else {
        preds = predict(load_checkpoint(str(c, "checkpoint")), data);
    }
    ensure_parent(str(c, "out"));
    write_lines(str(c, "out"), preds);
    out << "decoded " << preds.size() << " examples\n";
}

void cmd_eval(const Command&, const json& c, std::ostream& out) {
    const SubwordModel tok = SubwordModel::load(str(c, "tokenizer"));
    const LidModel lid = LidModel::load(str(c, "lid"));
    const auto data = load_summ_examples(str(c, "data")).records;
    const auto preds = read_lines(str(c, "preds"));
    if (preds.size() != data.size()) {
        throw InputError("data has " + std::to_string(data.size()) + " examples but preds has " +
                         std::to_string(preds.size()) + " lines");
    }
    std::vector<Prediction> ps;
    std::vector<std::string> refs;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::string lang = str(c, "language").empty() ? data[i].language : str(c, "language");
        if (!lid.knows(lang)) {
            throw InputError("LID model has no language '" + lang + "'");
        }
        ps.push_back({preds[i], lang});
        refs.push_back(data[i].summary);
    }
    EvalOptions opts;
    opts.trim = flag(c, "trim");
    opts.source_language = str(c, "source_language");
    const EvalReport rep = corpus_eval(ps, refs, tok, lid, opts);
    emit_json(c, json::parse(rep.to_json()), out);
}

void cmd_curves(const Command&, const json& c, std::ostream& out) {
    const SubwordModel tok = SubwordModel::load(str(c, "tokenizer"));
    const LidModel lid = LidModel::load(str(c, "lid"));
    const Backbone bb = load_backbone(str(c, "backbone"));
    check_vocab(bb, tok);
    std::map<std::string, std::vector<SummExample>> sets;
    for (const auto& item : list(c, "eval")) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw UsageError("--eval expects LANG=FILE entries, got '" + item + "'");
        }
        auto data = load_summ_examples(item.substr(eq + 1)).records;
        if (data.size() > kValidationExamples) {
            data.resize(kValidationExamples);
        }
        sets[item.substr(0, eq)] = std::move(data);
    }
    if (sets.empty()) {
        throw UsageError("--eval needs at least one LANG=FILE entry");
    }
    EvalContext ctx;
    ctx.tokenizer = &tok;
    ctx.lid = &lid;
    ctx.source_language = str(c, "source_language");
    ctx.trim = flag(c, "trim");
    ctx.predict = model_predictor(&bb, tok, decode_config(c), prompt_source(c));
    const Curves curves = learning_curves(load_checkpoint_dir(str(c, "checkpoints")), sets, ctx);
    ensure_parent(str(c, "out"));
    write_curves_csv(curves, str(c, "out"));
    out << "wrote curves for " << curves.size() << " language(s)\n";
}

void cmd_cluster(const Command&, const json& c, std::ostream& out) {
    std::map<std::string, Prompt> prompts;
    if (!str(c, "factorized").empty()) {
        prompts = factorized_from_checkpoint(load_checkpoint(str(c, "factorized"))).language;
    }
    for (const auto& item : list(c, "prompts")) {
        const auto eq = item.find('=');
        const std::string path = eq == std::string::npos ? item : item.substr(eq + 1);
        const std::string label = eq == std::string::npos ? fs::path(path).stem().string() : item.substr(0, eq);
        const Checkpoint ck = load_checkpoint(path);
        if (ck.kind != "prompt") {
            throw InputError("'" + path + "' is not a prompt checkpoint");
        }
        if (!prompts.emplace(label, ck.prompt("prompt")).second) {
            throw InputError("duplicate prompt label '" + label + "'");
        }
    }
    if (prompts.size() < 2) {
        throw UsageError("cluster needs at least two prompts (--prompts or --factorized)");
    }
    const SimilarityMatrix m = prompt_similarity_matrix(prompts);
    const Partition parts = agglomerative_cluster(m, num(c, "k"));
    const auto order = cluster_leaf_order(m);
    const fs::path dir(str(c, "out_dir"));
    fs::create_directories(dir);
    export_heatmap(m, order, (dir / "heatmap.svg").string(), (dir / "matrix.csv").string());
    const json result{{"clusters", parts}, {"leaf_order", order}};
    write_file((dir / "clusters.json").string(), result.dump(2) + "\n");
    out << result.dump() << "\n";
}

void cmd_recipe(const Command&, const json& c, std::ostream& out) {
    const RecipeConfig rc = RecipeConfig::from_json(c.dump());
    const RecipeResult res = run_recipe(rc);
    const auto& s = res.test_report.per_language.at(rc.target_language);
    out << rc.recipe << ": selected step " << res.checkpoints[res.selected].step << ", test "
        << rc.target_language << " SP-RG-Lsum " << format_real(s.sp_rg_lsum) << ", LID "
        << format_real(s.lid_target) << "; report at " << (fs::path(rc.output_dir) / "report.json").string() << "\n";
}

const json kTrainDefaults = {{"steps", 1000},        {"batch_size", 8},  {"checkpoint_every", 0},
                             {"optimizer", "sgd"},   {"lr", 0.1},        {"clip_norm", 0.0},
                             {"out_dir", ""},        {"resume", ""}};

json with(json base, const json& more) {
    for (const auto& [k, v] : more.items()) {
        base[k] = v;
    }
    return base;
}

const json kDecodeDefaults = {{"beam_size", 4}, {"alpha", 0.6}, {"max_len", 64}};

std::vector<Command> build_commands() {
    std::vector<Command> cmds;
    cmds.push_back({"tokenizer-train", "Train a subword tokenizer on a document corpus",
                    {{"corpus", ""}, {"vocab_size", 1024}, {"out", ""}}, {"corpus", "out"}, {"corpus"},
                    cmd_tokenizer_train});
    cmds.push_back({"gen-corpus", "Generate a synthetic multilingual document corpus",
                    {{"specs", ""}, {"languages", json::array()}, {"docs_per_lang", 1000}, {"out", ""}, {"specs_out", ""}},
                    {"out"}, {"specs"}, cmd_gen_corpus});
    cmds.push_back({"gen-summ", "Generate toy summarization examples for one language",
                    {{"specs", ""}, {"lang", ""}, {"n", 100}, {"out", ""}}, {"lang", "out"}, {"specs"}, cmd_gen_summ});
    cmds.push_back({"build-tasks", "Apply an unsupervised task builder to documents",
                    {{"task", ""}, {"lang", ""}, {"in", ""}, {"tokenizer", ""}, {"prefix_n", 64}, {"out", ""}},
                    {"task", "lang", "in", "tokenizer"}, {"in", "tokenizer"}, cmd_build_tasks});
    cmds.push_back({"lid-train", "Train the n-gram language identifier",
                    {{"corpus", ""}, {"max_ngrams", 4096}, {"out", ""}}, {"corpus", "out"}, {"corpus"}, cmd_lid_train});
    cmds.push_back({"lid-eval", "Measure LID accuracy on labelled documents", {{"model", ""}, {"in", ""}, {"out", ""}},
                    {"model", "in"}, {"model", "in"}, cmd_lid_eval});
    cmds.push_back({"rouge", "Score predictions against references with SP-Rouge",
                    {{"refs", ""}, {"preds", ""}, {"tokenizer", ""}, {"trim", false}, {"out", ""}},
                    {"refs", "preds", "tokenizer"}, {"refs", "preds", "tokenizer"}, cmd_rouge});
    cmds.push_back({"correlate", "Pearson correlation of system and human scores (CSV)", {{"scores", ""}, {"out", ""}},
                    {"scores"}, {"scores"}, cmd_correlate});
    cmds.push_back({"trim", "Remove prediction-final repeated substrings",
                    {{"in", ""}, {"out", ""}, {"report", ""}}, {"in", "out", "report"}, {"in"}, cmd_trim});
    cmds.push_back({"lead", "Lead-n extractive baseline", {{"in", ""}, {"tokenizer", ""}, {"n", kDefaultLeadTokens}, {"out", ""}},
                    {"in", "tokenizer", "out"}, {"in", "tokenizer"}, cmd_lead});
    cmds.push_back({"pretrain", "Pretrain a backbone on the unsupervised task mixture",
                    with(kTrainDefaults, {{"corpus", ""},
                                          {"tokenizer", ""},
                                          {"languages", {"en", "fr", "ru", "uk"}},
                                          {"tasks", [] {
                                               json a = json::array();
                                               for (auto k : all_tasks()) {
                                                   a.push_back(task_name(k));
                                               }
                                               return a;
                                           }()},
                                          {"d_model", 64},
                                          {"n_heads", 4},
                                          {"enc_layers", 2},
                                          {"dec_layers", 2},
                                          {"ffn_dim", 256},
                                          {"max_len", 128},
                                          {"untied", false},
                                          {"prefix_n", 64},
                                          {"optimizer", "adam"},
                                          {"lr", 2e-3},
                                          {"clip_norm", 1.0}}),
                    {"corpus", "tokenizer", "out_dir"}, {"corpus", "tokenizer", "resume"}, cmd_pretrain});
    cmds.push_back({"prompt-tune", "Tune a soft prompt on a frozen backbone",
                    with(kTrainDefaults, {{"backbone", ""}, {"tokenizer", ""}, {"train", ""}, {"prompt_length", kDefaultPromptLength}}),
                    {"backbone", "tokenizer", "train", "out_dir"}, {"backbone", "tokenizer", "train", "resume"},
                    cmd_prompt_tune});
    cmds.push_back({"model-tune", "Tune every backbone weight",
                    with(kTrainDefaults, {{"backbone", ""}, {"tokenizer", ""}, {"train", ""}, {"lr", 1e-3}}),
                    {"backbone", "tokenizer", "train", "out_dir"}, {"backbone", "tokenizer", "train", "resume"},
                    cmd_model_tune});
    cmds.push_back({"factorized-train", "Train language and task sub-prompts jointly",
                    with(kTrainDefaults, {{"backbone", ""},
                                          {"tokenizer", ""},
                                          {"corpus", ""},
                                          {"languages", json::array()},
                                          {"sub_prompt_length", kDefaultSubPromptLength},
                                          {"init_scale", 0.5},
                                          {"prefix_n", 64}}),
                    {"backbone", "tokenizer", "corpus", "out_dir"}, {"backbone", "tokenizer", "corpus", "resume"},
                    cmd_factorized_train});
    cmds.push_back({"downstream-train", "Train a task half next to a frozen language half",
                    with(kTrainDefaults, {{"backbone", ""},
                                          {"tokenizer", ""},
                                          {"factorized", ""},
                                          {"train", ""},
                                          {"language", "en"},
                                          {"task_init", "span_corruption"}}),
                    {"backbone", "tokenizer", "factorized", "train", "out_dir"},
                    {"backbone", "tokenizer", "factorized", "train", "resume"}, cmd_downstream_train});
    cmds.push_back({"decode", "Generate summaries with beam search",
                    with(kDecodeDefaults, {{"backbone", ""},
                                           {"tokenizer", ""},
                                           {"in", ""},
                                           {"checkpoint", ""},
                                           {"factorized", ""},
                                           {"language_half", ""},
                                           {"out", ""}}),
                    {"backbone", "tokenizer", "in", "out"}, {"backbone", "tokenizer", "in", "checkpoint", "factorized"},
                    cmd_decode});
    cmds.push_back({"eval", "Corpus evaluation: SP-Rouge, LID and ASCII per language",
                    {{"data", ""}, {"preds", ""}, {"tokenizer", ""}, {"lid", ""}, {"language", ""},
                     {"source_language", "en"}, {"trim", true}, {"out", ""}},
                    {"data", "preds", "tokenizer", "lid"}, {"data", "preds", "tokenizer", "lid"}, cmd_eval});
    cmds.push_back({"curves", "Learning curves over a checkpoint directory",
                    with(kDecodeDefaults, {{"checkpoints", ""},
                                           {"backbone", ""},
                                           {"tokenizer", ""},
                                           {"lid", ""},
                                           {"eval", json::array()},
                                           {"factorized", ""},
                                           {"language_half", ""},
                                           {"source_language", "en"},
                                           {"trim", true},
                                           {"out", ""}}),
                    {"checkpoints", "backbone", "tokenizer", "lid", "out"}, {"backbone", "tokenizer", "lid", "factorized"},
                    cmd_curves});
    cmds.push_back({"cluster", "Cluster prompts by cosine similarity and draw a heatmap",
                    {{"prompts", json::array()}, {"factorized", ""}, {"k", 2}, {"out_dir", ""}}, {"out_dir"},
                    {"factorized"}, cmd_cluster});
    json recipe_defaults = json::parse(RecipeConfig{}.to_json());
    recipe_defaults.erase("recipe");
    cmds.push_back({"recipe", "Run an experiment recipe end to end", recipe_defaults, {"output_dir"},
                    {"tokenizer", "lid", "backbone", "corpus", "train", "validation", "test", "source_validation",
                     "intermediate"},
                    cmd_recipe, true});
    return cmds;
}

const std::vector<Command>& commands() {
    static const std::vector<Command> cmds = build_commands();
    return cmds;
}

json manifest_for(const Command& cmd, const json& cfg) {
    json inputs = json::object();
    for (const auto& k : cmd.inputs) {
        if (cfg.contains(k) && cfg[k].is_string() && !cfg[k].get<std::string>().empty()) {
            const std::string path = cfg[k].get<std::string>();
            inputs[k] = {{"path", path}, {"hash", fs::exists(path) ? hash_file(path) : std::string("missing")}};
        }
    }
    return {{"command", cmd.name}, {"version", kVersion}, {"config", cfg}, {"inputs", inputs}};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"xgkit: zero-shot cross-lingual generation laboratory", "xgkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    struct Bound {
        const Command* cmd;
        CLI::App* sub;
        std::string config_path;
        std::string name;
        std::map<std::string, std::string> raw;
        std::map<std::string, bool> bools;
        std::map<std::string, CLI::Option*> opts;
    };
    std::vector<std::unique_ptr<Bound>> bound;
    for (const auto& cmd : commands()) {
        auto b = std::make_unique<Bound>();
        b->cmd = &cmd;
        b->sub = app.add_subcommand(cmd.name, cmd.help);
        b->sub->add_option("--config", b->config_path, "JSON file of flat keys; flags override it");
        if (cmd.positional_name) {
            b->sub->add_option("name", b->name, "Recipe name")->required();
        }
        b->opts["seed"] = b->sub->add_option("--seed", b->raw["seed"], "Global seed (falls back to XGKIT_SEED)");
        for (const auto& [key, def] : cmd.defaults.items()) {
            if (key == "seed") {
                continue;
            }
            const bool req = std::find(cmd.required.begin(), cmd.required.end(), key) != cmd.required.end();
            const std::string help = req ? "(required)" : "default " + def.dump();
            if (def.is_boolean()) {
                b->bools[key] = def.get<bool>();
                b->opts[key] = b->sub->add_flag("--" + dashed(key) + ",!--no-" + dashed(key), b->bools[key], help);
            } else {
                b->opts[key] = b->sub->add_option("--" + dashed(key), b->raw[key],
                                                  def.is_array() ? help + " (comma separated)" : help);
            }
        }
        bound.push_back(std::move(b));
    }

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    for (const auto& b : bound) {
        if (!b->sub->parsed()) {
            continue;
        }
        const Command& cmd = *b->cmd;
        json cfg = cmd.defaults;
        cfg["seed"] = cfg.contains("seed") ? cfg["seed"] : json(std::uint64_t{0});
        json seed_default = cfg["seed"];
        bool seed_given = false;
        if (!b->config_path.empty()) {
            json file;
            try {
                file = json::parse(read_file(b->config_path));
            } catch (const json::exception& e) {
                throw ConfigError(b->config_path + " is not valid JSON: " + e.what());
            }
            if (!file.is_object()) {
                throw ConfigError(b->config_path + " must hold a JSON object");
            }
            for (const auto& [k, v] : file.items()) {
                if (cmd.positional_name && k == "recipe") {
                    continue;
                }
                if (!cfg.contains(k)) {
                    throw ConfigError(b->config_path + ": unknown key '" + k + "' for " + cmd.name);
                }
                check_type(k, cfg[k], v, b->config_path);
                cfg[k] = cfg[k].is_number_float() ? json(v.get<double>()) : v;
                seed_given = seed_given || k == "seed";
            }
        }
        for (const auto& [key, opt] : b->opts) {
            if (opt->count() == 0) {
                continue;
            }
            if (cmd.defaults.contains(key) && cmd.defaults[key].is_boolean()) {
                cfg[key] = b->bools[key];
            } else {
                cfg[key] = parse_flag_value(key, key == "seed" ? seed_default : cmd.defaults[key], b->raw[key]);
            }
            seed_given = seed_given || key == "seed";
        }
        if (!seed_given) {
            if (const char* env = std::getenv("XGKIT_SEED"); env != nullptr && *env != '\0') {
                try {
                    cfg["seed"] = parse_flag_value("seed", seed_default, env);
                } catch (const UsageError&) {
                    throw ConfigError(std::string("XGKIT_SEED must be a non-negative integer, got '") + env + "'");
                }
            }
        }
        for (const auto& k : cmd.required) {
            const json& v = cfg.at(k);
            if ((v.is_string() && v.get<std::string>().empty()) || (v.is_array() && v.empty())) {
                throw UsageError(cmd.name + ": missing required option --" + dashed(k));
            }
        }
        for (const auto& k : cmd.inputs) {
            if (cfg.contains(k) && !str(cfg, k.c_str()).empty() && cmd.name != "recipe") {
                need_file(str(cfg, k.c_str()), k);
            }
        }
        if (cmd.positional_name) {
            cfg["recipe"] = b->name;
        }
        cmd.run(cmd, cfg, out);
        // Manifests go next to file outputs; stdout reports embed the config instead.
        const json manifest = manifest_for(cmd, cfg);
        if (cfg.contains("out_dir") && !str(cfg, "out_dir").empty() && cmd.name != "recipe") {
            write_file((fs::path(str(cfg, "out_dir")) / "manifest.json").string(), manifest.dump(2) + "\n");
        } else if (cmd.name == "recipe") {
            write_file((fs::path(str(cfg, "output_dir")) / "run.json").string(), manifest.dump(2) + "\n");
        } else if (cfg.contains("out") && !str(cfg, "out").empty()) {
            write_file(str(cfg, "out") + ".manifest.json", manifest.dump(2) + "\n");
        }
        return 0;
    }
    return 1;
}

} // namespace

const std::vector<std::string>& cli_subcommands() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& c : commands()) {
            n.push_back(c.name);
        }
        return n;
    }();
    return names;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return run(args, out, err);
    } catch (const Error& e) {
        err << "xgkit: " << e.prefix() << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        err << "xgkit: io error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        err << "xgkit: format error: " << e.what() << "\n";
        return 2;
    } catch (const std::bad_alloc&) {
        err << "xgkit: error: out of memory\n";
        return 2;
    } catch (const std::exception& e) {
        err << "xgkit: error: " << e.what() << "\n";
        return 2;
    }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run_cli(args, out, err);
}

} // namespace xgkit
