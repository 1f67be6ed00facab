// Acceptance suite: one PASS/FAIL line per criterion.
//
//   xgkit_acceptance [--lab DIR] [--work DIR] [--only SUBSTRING] [--list]
//
// The experiment criteria share a prepared lab (corpus, tokenizer, LID model,
// pretrained backbone, summarization splits). It is built on first use and
// reused afterwards; building it is not counted toward any runtime limit.

#include "support/oracles.hpp"

#include "CLI11.hpp"

#include "xgkit/analysis.hpp"
#include "xgkit/corpus.hpp"
#include "xgkit/decoding.hpp"
#include "xgkit/errors.hpp"
#include "xgkit/fileio.hpp"
#include "xgkit/langid.hpp"
#include "xgkit/metrics.hpp"
#include "xgkit/recipes.hpp"
#include "xgkit/tasks.hpp"
#include "xgkit/textops.hpp"
#include "xgkit/training.hpp"
#include "xgkit/transformer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#ifndef XGKIT_ACCEPTANCE_DIR
#define XGKIT_ACCEPTANCE_DIR "acceptance-work"
#endif

using namespace xgkit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    std::function<Outcome()> run;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt_list(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt("%.1f", v[i]);
    return s + "]";
}

double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

naive::Matrix to_rows(const Mat& m) {
    naive::Matrix out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    return out;
}

struct Env {
    std::string lab_dir;
    std::string work_dir;
    std::optional<LabPaths> lab;
    std::optional<LabPaths> lab_all;

    static LabPaths prepare(const LabConfig& cfg, const std::string& dir) {
        std::cerr << "lab " << dir << "\n";
        return prepare_lab(cfg, dir, [](const std::string& s) { std::cerr << "  " << s << "\n"; });
    }
    // Backbone pretrained on four languages: the experiment lab.
    const LabPaths& paths() {
        if (!lab) lab = prepare(LabConfig{}, lab_dir);
        return *lab;
    }
    // Same corpus, backbone pretrained on all eight languages.
    const LabPaths& paths_all_languages() {
        if (!lab_all) {
            LabConfig c;
            c.pretrain_languages = {"bg", "de", "en", "es", "fr", "kk", "ru", "uk"};
            lab_all = prepare(c, lab_dir + "-all");
        }
        return *lab_all;
    }
    std::string run_dir(const std::string& name) const {
        const fs::path p = fs::path(work_dir) / name;
        fs::remove_all(p);
        return p.string();
    }
};

std::vector<std::string> all_task_names() {
    std::vector<std::string> v;
    for (TaskKind k : all_tasks()) v.push_back(task_name(k));
    return v;
}

// Prompt tuning on source-language summarization, validated on the target.
RecipeConfig desk_prompt_tuning(Env& env, const std::string& recipe, std::uint64_t seed, const std::string& dir) {
    RecipeConfig c = lab_recipe(env.paths(), recipe, "ru", dir);
    c.source_validation.clear();
    c.seed = seed;
    c.optimizer = "adam";
    c.lr = 0.1;
    c.clip_norm = 0.0;
    c.prompt_length = 20;
    c.steps = 3000;
    c.checkpoint_every = 100;
    c.max_decode_len = 24;
    c.prefix_n = LabConfig{}.prefix_n;
    return c;
}

RecipeConfig desk_factorized(Env& env, const std::string& recipe, std::uint64_t seed, const std::string& dir) {
    RecipeConfig c = lab_recipe(env.paths(), recipe, "ru", dir);
    c.source_validation.clear();
    c.seed = seed;
    c.optimizer = "adam";
    c.lr = 0.1;
    c.clip_norm = 1.0;
    c.sub_prompt_length = 10;
    c.factorized_steps = 3000;
    c.factorized_lr = 0.1;
    c.factorized_languages = LabConfig{}.pretrain_languages;
    c.steps = 1500;
    c.checkpoint_every = 500;
    c.max_decode_len = 24;
    c.prefix_n = LabConfig{}.prefix_n;
    return c;
}

// ---------------------------------------------------------------- properties

Outcome rouge_oracle() {
    Stopwatch sw;
    Rng rng(101);
    int mismatches = 0;
    auto random_seq = [&rng](std::size_t max_len) {
        std::vector<int> s(rng.below(max_len + 1));
        for (int& t : s) t = static_cast<int>(rng.below(6));
        return s;
    };
    for (int i = 0; i < 500; ++i) {
        const auto a = random_seq(20);
        const auto b = random_seq(20);
        for (int n : {1, 2, 3}) {
            const PRF got = rouge_n(a, b, n);
            const auto want = oracle::rouge_n(a, b, n);
            mismatches += got.precision != want.p || got.recall != want.r || got.f1 != want.f;
        }
        // split each side into up to three sentences, total length <= 20
        auto split = [&rng](const std::vector<int>& s) {
            std::vector<std::vector<int>> out(1);
            for (int t : s) {
                if (!out.back().empty() && out.size() < 3 && rng.below(5) == 0) out.emplace_back();
                out.back().push_back(t);
            }
            return out;
        };
        const auto ra = split(a);
        const auto rb = split(b);
        const PRF got = rouge_lsum(ra, rb);
        const auto want = oracle::rouge_lsum(ra, rb);
        mismatches += got.precision != want.p || got.recall != want.r || got.f1 != want.f;
    }
    const double t = sw.seconds();
    return {mismatches == 0 && t < 5.0, std::to_string(mismatches) + " mismatches, " + fmt("%.2fs", t)};
}

// Half synthetic documents across all eight languages, half random Unicode.
std::vector<std::string> multilingual_strings(int n, std::uint64_t seed) {
    const auto docs = gen_synthetic_multilingual(default_language_specs(seed), n, seed);
    std::vector<std::string> out;
    Rng rng(seed);
    auto lang = docs.begin();
    for (int i = 0; i < n; ++i) {
        if (i % 2 == 0) {
            out.push_back(lang->second[static_cast<std::size_t>(i)].text);
            if (++lang == docs.end()) lang = docs.begin();
        } else {
            out.push_back(oracle::random_unicode(rng, 60));
        }
    }
    return out;
}

Outcome sp_rouge_identity(Env& env) {
    const SubwordModel tok = SubwordModel::load(env.paths().tokenizer);
    int bad = 0;
    for (std::string s : multilingual_strings(100, 7)) {
        if (split_sentences(s).empty()) s += "x";
        bad += 100.0 * sp_rouge(tok, s, s).lsum.f1 != 100.0;
    }
    return {bad == 0, std::to_string(bad) + "/100 strings below 100"};
}

Outcome tokenizer_round_trip(Env& env) {
    const SubwordModel tok = SubwordModel::load(env.paths().tokenizer);
    Rng rng(202);
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::string s = oracle::random_unicode(rng, 60);
        bad += tok.decode(tok.encode(s)) != s;
    }
    return {bad == 0, std::to_string(bad) + "/1000 strings changed"};
}

Outcome trimming() {
    int fixture_fail = 0;
    for (const auto& [in, want] : oracle::trim_fixtures()) fixture_fail += trim_trailing_repeats(in).first != want;
    Rng rng(303);
    const std::vector<std::string> alphabet{"a", "b", " ", "д", "😀"};
    int idem_fail = 0;
    for (int i = 0; i < 1000; ++i) {
        std::string s;
        if (i % 4 == 3) {
            s = oracle::random_unicode(rng);
        } else {
            const auto n = rng.uniform_int(0, 24);
            for (std::int64_t k = 0; k < n; ++k) s += alphabet[rng.below(alphabet.size())];
        }
        const std::string once = trim_trailing_repeats(s).first;
        idem_fail += trim_trailing_repeats(once).first != once || s.rfind(once, 0) != 0;
    }
    const std::size_t n_fix = oracle::trim_fixtures().size();
    return {fixture_fail == 0 && idem_fail == 0 && n_fix >= 10,
            std::to_string(n_fix - static_cast<std::size_t>(fixture_fail)) + "/" + std::to_string(n_fix) +
                " fixtures, " + std::to_string(idem_fail) + "/1000 idempotence failures"};
}

Outcome denoising_round_trip() {
    Rng rng(404);
    const int base = 1000;
    int bad = 0;
    int skipped = 0;
    for (int i = 0; i < 1000; ++i) {
        TokenIds t(static_cast<std::size_t>(rng.uniform_int(2, 120)));
        for (int& x : t) x = static_cast<int>(rng.uniform_int(3, base - 1));
        for (const bool span : {true, false}) {
            const auto ex = span ? span_corruption(t, rng, base) : iid_denoising(t, rng, base);
            if (!ex) {
                ++skipped;
                continue;
            }
            bad += reconstruct(*ex, base) != t;
        }
    }
    return {bad == 0 && skipped == 0,
            std::to_string(bad) + " mismatches over 2000 round trips, " + std::to_string(skipped) + " skipped"};
}

Outcome mixture_rate() {
    struct Fixed : ExampleStream {
        std::string name;
        explicit Fixed(std::string n) : name(std::move(n)) {}
        TaskExample next() override { return TaskExample{{}, {3}, name, "en"}; }
    };
    std::map<std::string, std::shared_ptr<ExampleStream>> streams{{"main", std::make_shared<Fixed>("main")},
                                                                 {"u", std::make_shared<Fixed>("u")}};
    Mixture mix(MixtureSpec{1.0, "main", {"u"}, 505}, streams);
    int unsup = 0;
    for (int i = 0; i < 100000; ++i) unsup += mix.next().task == "u";
    const double frac = unsup / 1000.0; // percent
    return {frac >= 0.8 && frac <= 1.2, fmt("unsup fraction %.3f%%", frac)};
}

Outcome gradient_check() {
    Stopwatch sw;
    BackboneConfig c;
    c.d_model = 32;
    c.n_heads = 4;
    c.n_enc_layers = 2;
    c.n_dec_layers = 2;
    c.ffn_dim = 64;
    c.vocab_size = 50;
    c.max_len = 32;
    auto bb = Backbone::init(c, 606);
    bb.freeze();
    Rng rng(607);
    const Prompt prompt = Prompt::random_uniform(4, c.d_model, rng);
    std::vector<TaskExample> batch;
    for (int i = 0; i < 4; ++i) {
        TaskExample ex;
        ex.inputs.resize(static_cast<std::size_t>(rng.uniform_int(0, 10)));
        ex.targets.resize(static_cast<std::size_t>(rng.uniform_int(1, 8)));
        for (int& t : ex.inputs) t = static_cast<int>(rng.uniform_int(3, c.vocab_size - 1));
        for (int& t : ex.targets) t = static_cast<int>(rng.uniform_int(3, c.vocab_size - 1));
        batch.push_back(ex);
    }
    const Mat g = prompt_grad(bb, prompt, batch);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(g.size())));
        Prompt plus = prompt, minus = prompt;
        plus.values().data()[i] += 1e-5;
        minus.values().data()[i] -= 1e-5;
        const double fd = (batch_loss(bb, &plus, batch) - batch_loss(bb, &minus, batch)) / 2e-5;
        const double denom = std::max({std::abs(fd), std::abs(g.data()[i]), 1e-8});
        worst = std::max(worst, std::abs(fd - g.data()[i]) / denom);
    }
    const double t = sw.seconds();
    return {worst <= 1e-5 && t < 30.0, fmt("max relative error %.2e, ", worst) + fmt("%.2fs", t)};
}

Outcome freeze_invariance(Env& env) {
    Backbone bb = load_checkpoint(env.paths().backbone).backbone();
    bb.freeze();
    const std::string before = bb.fingerprint();
    const std::vector<std::uint8_t> raw(reinterpret_cast<const std::uint8_t*>(bb.data()),
                                        reinterpret_cast<const std::uint8_t*>(bb.data() + bb.parameters().size()));
    const SubwordModel tok = SubwordModel::load(env.paths().tokenizer);
    const auto train = load_summ_examples(env.paths().train).records;
    ListStream data(summarization_examples(train, tok, bb.config()), 1);
    TrainConfig tc;
    tc.steps = 1000;
    tc.batch_size = 1;
    tc.optimizer.kind = "adam";
    tc.optimizer.lr = 0.1;
    const auto res = train_prompt(bb, initial_prompt(bb, 2, 1, tok.vocab_size()), data, tc);
    const std::vector<std::uint8_t> after(reinterpret_cast<const std::uint8_t*>(bb.data()),
                                          reinterpret_cast<const std::uint8_t*>(bb.data() + bb.parameters().size()));
    const bool same = raw == after && bb.fingerprint() == before &&
                      res.checkpoints.back().backbone_fingerprint == before;
    return {same, same ? "fingerprint unchanged after 1000 steps" : "backbone changed"};
}

Outcome beam_correctness() {
    BackboneConfig c;
    c.d_model = 4;
    c.n_heads = 2;
    c.n_enc_layers = 1;
    c.n_dec_layers = 1;
    c.ffn_dim = 6;
    c.vocab_size = 3;
    c.max_len = 8;
    const std::vector<int> inputs{2, 0, 2};
    Rng rng(707);
    int beam_bad = 0;
    int greedy_bad = 0;
    for (int draw = 0; draw < 50; ++draw) {
        const Backbone base = Backbone::init(c, 700 + static_cast<std::uint64_t>(draw));
        std::vector<double> params(base.parameters().begin(), base.parameters().end());
        const double scale = 1.0 + static_cast<double>(draw % 5);
        for (double& p : params) p *= scale;
        const Backbone bb(c, params);
        const Prompt prompt = Prompt::random_uniform(1, c.d_model, rng);
        // 3^3 hypotheses: a beam this wide never prunes, so it must find the optimum
        DecodeConfig dc{27, 0.6, 3};
        beam_bad += decode_beam(bb, &prompt.values(), inputs, dc) !=
                    oracle::exhaustive_decode(bb, to_rows(prompt.values()), inputs, 3, 0.6);
        dc.beam_size = 1;
        greedy_bad += decode_beam(bb, &prompt.values(), inputs, dc) != decode_greedy(bb, &prompt.values(), inputs, 3);
    }
    return {beam_bad == 0 && greedy_bad == 0,
            std::to_string(beam_bad) + "/50 beam mismatches, " + std::to_string(greedy_bad) + "/50 greedy mismatches"};
}

Outcome lid(Env& env) {
    const LidModel model = LidModel::load(env.paths().lid);
    const auto specs = load_language_specs(env.paths().specs);
    const auto held_out = gen_synthetic_multilingual(specs, 50, 9090);
    int right = 0;
    int total = 0;
    for (const auto& [lang, docs] : held_out) {
        for (const auto& d : docs) {
            right += model.detect(d.text).language == lang;
            ++total;
        }
    }
    int ascii_bad = 0;
    for (const auto& [text, want] : oracle::ascii_fixtures()) ascii_bad += ascii_fraction(text) != want;
    const double acc = 100.0 * right / total;
    return {acc >= 95.0 && ascii_bad == 0 && held_out.size() == 8,
            fmt("accuracy %.2f%% on ", acc) + std::to_string(total) + " held-out docs in " +
                std::to_string(held_out.size()) + " languages, " + std::to_string(ascii_bad) + " ascii fixture errors"};
}

Outcome pearson_check() {
    int bad = 0;
    const std::vector<double> x{1, 2, 3, 4, 5};
    bad += std::abs(pearson(x, std::vector<double>{3, 5, 7, 9, 11}) - 1.0) > 1e-12;
    bad += std::abs(pearson(x, std::vector<double>{-2, -4, -6, -8, -10}) + 1.0) > 1e-12;
    bad += std::abs(pearson(std::vector<double>{-1, 0, 1}, std::vector<double>{1, -2, 1})) > 1e-12;
    // deviations (-1,0,1) and (-1,1,0): r = 1 / 2
    bad += std::abs(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}) - 0.5) > 1e-12;
    Rng rng(808);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> a(static_cast<std::size_t>(rng.uniform_int(3, 30)));
        std::vector<double> b(a.size());
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        worst = std::max(worst, std::abs(pearson(a, b) - oracle::pearson(a, b)));
    }
    return {bad == 0 && worst <= 1e-12,
            std::to_string(bad) + " fixture errors, " + fmt("max oracle gap %.1e", worst)};
}

// --------------------------------------------------------------- experiments

struct DeskRuns {
    std::map<std::uint64_t, RecipeResult> vanilla;
    double vanilla_seconds = 0.0;
};

DeskRuns& vanilla_runs(Env& env) {
    static std::optional<DeskRuns> runs;
    if (!runs) {
        runs.emplace();
        Stopwatch sw;
        for (std::uint64_t seed : {1, 2, 3}) {
            runs->vanilla[seed] =
                run_recipe(desk_prompt_tuning(env, "vanilla-PT", seed, env.run_dir("vanilla-" + std::to_string(seed))));
        }
        runs->vanilla_seconds = sw.seconds();
    }
    return *runs;
}

Outcome forgetting(Env& env) {
    const DeskRuns& runs = vanilla_runs(env);
    int forgot = 0;
    std::vector<double> first, last;
    for (const auto& [seed, r] : runs.vanilla) {
        const auto& curve = r.curves.at("ru");
        first.push_back(curve.front().lid_target);
        last.push_back(curve.back().lid_target);
        forgot += curve.back().lid_target < curve.front().lid_target;
    }
    const double t = runs.vanilla_seconds;
    return {forgot >= 2 && t <= 600.0, std::to_string(forgot) + "/3 seeds forgot; lid_target first " +
                                           fmt_list(first) + " final " + fmt_list(last) + ", " + fmt("%.0fs", t)};
}

Outcome mixing(Env& env) {
    const DeskRuns& runs = vanilla_runs(env);
    std::vector<double> vanilla, mixed;
    for (std::uint64_t seed : {1, 2, 3}) {
        RecipeConfig c = desk_prompt_tuning(env, "mix-unsup", seed, env.run_dir("mix-" + std::to_string(seed)));
        c.kappa = 1.0;
        c.unsup_tasks = all_task_names();
        const RecipeResult r = run_recipe(c);
        mixed.push_back(r.curves.at("ru").back().lid_target);
        vanilla.push_back(runs.vanilla.at(seed).curves.at("ru").back().lid_target);
    }
    const double gap = mean(mixed) - mean(vanilla);
    return {gap >= 10.0, "final lid_target mix " + fmt_list(mixed) + " vanilla " + fmt_list(vanilla) +
                             fmt(", mean gap %.1f", gap)};
}

Outcome factorized_transfer(Env& env) {
    Stopwatch sw;
    std::vector<double> fp_lid, en_lid, fp_lsum;
    double lead = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) {
        // both recipes share the factorized stage through the run directory
        const std::string dir = env.run_dir("fp-" + std::to_string(seed));
        const RecipeResult fp = run_recipe(desk_factorized(env, "fp", seed, dir));
        const RecipeResult en = run_recipe(desk_factorized(env, "fp-en", seed, dir + "-en"));
        fp_lid.push_back(fp.test_report.per_language.at("ru").lid_target);
        en_lid.push_back(en.test_report.per_language.at("ru").lid_target);
        fp_lsum.push_back(fp.test_report.per_language.at("ru").sp_rg_lsum);
        lead = fp.lead_lsum;
    }
    const double t = sw.seconds();
    const double gap = mean(fp_lid) - mean(en_lid);
    const bool pass = gap >= 20.0 && mean(fp_lsum) > lead && t <= 1200.0;
    return {pass, "lid_target fp " + fmt_list(fp_lid) + " fp-en " + fmt_list(en_lid) + fmt(" gap %.1f; ", gap) +
                      "lsum fp " + fmt_list(fp_lsum) + fmt(" vs lead-64 %.2f, ", lead) + fmt("%.0fs", t)};
}

Outcome clustering(Env& env) {
    // prompts for every language need a backbone that has seen every language
    const LabPaths& lab = env.paths_all_languages();
    const Backbone bb = [&] {
        Backbone b = load_checkpoint(lab.backbone).backbone();
        b.freeze();
        return b;
    }();
    const SubwordModel tok = SubwordModel::load(lab.tokenizer);
    std::map<std::string, std::vector<TokenIds>> corpus;
    for (const auto& d : load_documents(lab.corpus).records) corpus[d.language].push_back(tok.encode(d.text));
    TaskParams tp;
    tp.sentinel_base = tok.vocab_size();
    std::map<std::string, Prompt> prompts;
    for (const auto& [lang, ids] : corpus) {
        TaskStream stream(ids, lang, {TaskKind::lm}, tp, Rng::derive(1, "cluster/" + lang));
        TrainConfig tc;
        tc.steps = 3000;
        tc.batch_size = 8;
        tc.seed = 1;
        tc.optimizer.kind = "adam";
        tc.optimizer.lr = 0.01;
        prompts[lang] = train_prompt(bb, initial_prompt(bb, 1, 1, tok.vocab_size()), stream, tc)
                            .checkpoints.back()
                            .prompt("prompt");
    }
    const auto specs = load_language_specs(lab.specs);
    std::map<std::string, std::string> family;
    for (const auto& s : specs) family[s.name] = s.family;
    std::map<std::string, std::vector<std::string>> by_family;
    for (const auto& [l, f] : family) by_family[f].push_back(l);
    Partition want;
    for (const auto& [f, ls] : by_family) want.push_back(ls);
    std::sort(want.begin(), want.end());

    const SimilarityMatrix m = prompt_similarity_matrix(prompts);
    const Partition got = agglomerative_cluster(m, 2);
    double within = 0, cross = 0;
    int n_within = 0, n_cross = 0;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        for (std::size_t j = i + 1; j < m.labels.size(); ++j) {
            const double v = m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (family[m.labels[i]] == family[m.labels[j]]) {
                within += v;
                ++n_within;
            } else {
                cross += v;
                ++n_cross;
            }
        }
    }
    within /= n_within;
    cross /= n_cross;
    export_heatmap(m, cluster_leaf_order(m), (fs::path(env.work_dir) / "cluster-heatmap.svg").string(),
                   (fs::path(env.work_dir) / "cluster-matrix.csv").string());
    std::string parts;
    for (const auto& s : got) {
        parts += "{";
        for (const auto& l : s) parts += (parts.back() == '{' ? "" : ",") + l;
        parts += "}";
    }
    return {got == want && within > cross && prompts.size() == 8,
            "k=2 " + parts + fmt(", within %.3f", within) + fmt(" cross %.3f", cross)};
}

Outcome determinism(Env& env) {
    auto config = [&env](const std::string& dir) {
        RecipeConfig c = desk_factorized(env, "fp", 11, dir);
        c.factorized_steps = 200;
        c.steps = 100;
        c.checkpoint_every = 50;
        c.beam_size = 2;
        return c;
    };
    const std::string a = env.run_dir("determinism-a");
    const std::string b = env.run_dir("determinism-b");
    RecipeConfig ca = config(a);
    run_recipe(ca);
    RecipeConfig cb = config(b);
    run_recipe(cb);
    const std::string ra = read_file((fs::path(a) / "report.json").string());
    const std::string rb = read_file((fs::path(b) / "report.json").string());
    return {ra == rb, ra == rb ? "report.json identical (" + std::to_string(ra.size()) + " bytes)"
                               : "report.json differs"};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"xgkit acceptance suite"};
    Env env;
    env.work_dir = XGKIT_ACCEPTANCE_DIR;
    env.lab_dir = (fs::path(XGKIT_ACCEPTANCE_DIR) / "lab").string();
    std::string only;
    bool list = false;
    app.add_option("--lab", env.lab_dir, "prepared lab directory (built when missing)");
    app.add_option("--work", env.work_dir, "directory for experiment runs");
    app.add_option("--only", only, "run criteria whose name contains this");
    app.add_flag("--list", list, "list criteria and exit");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria = {
        {"rouge-oracle", rouge_oracle},
        {"sp-rouge-identity", [&] { return sp_rouge_identity(env); }},
        {"tokenizer-round-trip", [&] { return tokenizer_round_trip(env); }},
        {"trimming", trimming},
        {"denoising-round-trip", denoising_round_trip},
        {"mixture-rate", mixture_rate},
        {"gradient-check", gradient_check},
        {"freeze-invariance", [&] { return freeze_invariance(env); }},
        {"beam-correctness", beam_correctness},
        {"lid", [&] { return lid(env); }},
        {"forgetting", [&] { return forgetting(env); }},
        {"factorized-transfer", [&] { return factorized_transfer(env); }},
        {"mixing", [&] { return mixing(env); }},
        {"clustering", [&] { return clustering(env); }},
        {"pearson", pearson_check},
        {"determinism", [&] { return determinism(env); }},
    };
    if (list) {
        for (const auto& c : criteria) std::cout << c.name << "\n";
        return 0;
    }
    fs::create_directories(env.work_dir);
    int failed = 0;
    int ran = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && c.name.find(only) == std::string::npos) continue;
        ++ran;
        Outcome o;
        Stopwatch sw;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << "  " << o.detail << fmt("  [%.1fs]", sw.seconds())
                  << std::endl;
    }
    std::cout << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
