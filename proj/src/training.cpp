#include "xgkit/training.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/tokenizer.hpp"
#include "xgkit/transformer.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>

namespace xgkit {

void TrainConfig::validate() const {
    if (steps < 0) {
        throw ConfigError("steps must be non-negative");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be at least 1");
    }
    if (checkpoint_every < 0) {
        throw ConfigError("checkpoint_every must be non-negative");
    }
    optimizer.validate();
}

namespace {

struct Block {
    std::string name;
    std::span<double> values;
    std::vector<double> grad;
    bool touched = false;
};

// Shared update loop. `compute` fills block gradients (marking the blocks
// it touches) and returns the batch loss; `after_step` runs invariant checks.
struct Loop {
    const TrainConfig& cfg;
    ExampleStream& data;
    std::vector<Block>& blocks;
    Optimizer& opt;
    std::function<double(const std::vector<TaskExample>&)> compute;
    std::function<void()> after_step;
    std::function<Checkpoint(std::int64_t, double)> snapshot;
    const StepHook& hook;
    std::uint64_t consumed = 0;

    void dump(std::int64_t step, double loss, const std::vector<TaskExample>& batch) const {
        if (cfg.dump_path.empty()) {
            return;
        }
        nlohmann::ordered_json j;
        j["step"] = step;
        j["loss"] = std::isnan(loss) ? "nan" : (loss > 0 ? "inf" : "-inf");
        j["examples_consumed"] = consumed;
        auto& ex = j["batch"] = nlohmann::json::array();
        for (const auto& e : batch) {
            ex.push_back({{"task", e.task}, {"language", e.language}, {"inputs", e.inputs}, {"targets", e.targets}});
        }
        auto& norms = j["block_norms"] = nlohmann::json::object();
        for (const auto& b : blocks) {
            double sq = 0.0;
            for (const double v : b.values) {
                sq += v * v;
            }
            norms[b.name] = std::sqrt(sq);
        }
        std::ofstream out(cfg.dump_path);
        out << j.dump(2) << "\n";
    }

    TrainResult run(std::int64_t start) {
        TrainResult result;
        std::vector<TaskExample> batch;
        for (std::int64_t step = start; step < cfg.steps; ++step) {
            batch.clear();
            for (int i = 0; i < cfg.batch_size; ++i) {
                batch.push_back(data.next());
            }
            consumed += static_cast<std::uint64_t>(cfg.batch_size);
            for (auto& b : blocks) {
                std::fill(b.grad.begin(), b.grad.end(), 0.0);
                b.touched = false;
            }
            const double loss = compute(batch);
            if (!std::isfinite(loss)) {
                dump(step, loss, batch);
                throw InvariantError("non-finite loss at step " + std::to_string(step) +
                                     (cfg.dump_path.empty() ? "" : "; diagnostics written to " + cfg.dump_path));
            }
            result.losses.push_back(loss);
            std::vector<std::span<double>> grads;
            for (auto& b : blocks) {
                if (b.touched) {
                    grads.emplace_back(b.grad);
                }
            }
            clip_global_norm(grads, cfg.optimizer.clip_norm);
            for (std::size_t i = 0; i < blocks.size(); ++i) {
                if (blocks[i].touched) {
                    opt.step(i, blocks[i].values, blocks[i].grad);
                }
            }
            if (after_step) {
                after_step();
            }
            const std::int64_t done = step + 1;
            const bool save = cfg.checkpoint_every > 0 ? done % cfg.checkpoint_every == 0 : done == cfg.steps;
            if (save) {
                result.checkpoints.push_back(snapshot(done, loss));
            }
            if (hook) {
                hook(done, loss);
            }
        }
        return result;
    }
};

Optimizer make_optimizer(const TrainConfig& cfg, const std::vector<Block>& blocks) {
    Optimizer opt(cfg.optimizer);
    for (const auto& b : blocks) {
        opt.add_block(b.name, b.values.size());
    }
    return opt;
}

void restore_optimizer(Optimizer& opt, const Checkpoint& ckpt) {
    if (!(ckpt.optimizer_config == opt.config())) {
        throw ConfigError("resume checkpoint was written with a different optimizer configuration");
    }
    if (ckpt.optimizer_state.size() != opt.blocks().size()) {
        throw CorruptionError("resume checkpoint optimizer state does not match the parameter blocks");
    }
    for (std::size_t i = 0; i < opt.blocks().size(); ++i) {
        const auto& saved = ckpt.optimizer_state[i];
        auto& cur = opt.blocks()[i];
        if (saved.name != cur.name || saved.m.size() != cur.m.size() || saved.v.size() != cur.v.size()) {
            throw CorruptionError("resume checkpoint optimizer block '" + saved.name + "' does not match");
        }
        cur = saved;
    }
}

void check_resume(const Checkpoint* resume, const std::string& kind, const TrainConfig& cfg) {
    if (resume == nullptr) {
        return;
    }
    if (resume->kind != kind) {
        throw InputError("cannot resume a " + kind + " run from a " + resume->kind + " checkpoint");
    }
    if (resume->step > cfg.steps) {
        throw ConfigError("resume checkpoint step " + std::to_string(resume->step) + " exceeds steps " +
                          std::to_string(cfg.steps));
    }
}

Checkpoint base_checkpoint(std::int64_t step, double loss, const std::string& kind, const Backbone& bb,
                           const TrainConfig& cfg, const Optimizer& opt, std::uint64_t consumed, const Rng& rng) {
    Checkpoint c;
    c.step = step;
    c.kind = kind;
    c.config_hash = bb.config().hash();
    c.data_hash = cfg.data_hash;
    c.examples_consumed = consumed;
    c.rng_state = rng.state();
    c.loss = loss;
    c.optimizer_config = opt.config();
    c.optimizer_state = opt.blocks();
    return c;
}

TrainResult train_full(Backbone& backbone, ExampleStream& data, const TrainConfig& cfg, const Checkpoint* resume,
                       const StepHook& hook) {
    cfg.validate();
    if (backbone.frozen()) {
        throw InvariantError("full-parameter training needs an unfrozen backbone");
    }
    check_resume(resume, "backbone", cfg);
    if (resume != nullptr) {
        if (!resume->backbone_config || !(*resume->backbone_config == backbone.config())) {
            throw ConfigError("resume checkpoint has a different backbone configuration");
        }
        backbone = resume->backbone();
    }
    std::vector<Block> blocks(1);
    blocks[0].name = "backbone";
    blocks[0].values = backbone.mutable_parameters();
    blocks[0].grad.assign(blocks[0].values.size(), 0.0);
    Optimizer opt = make_optimizer(cfg, blocks);
    Rng rng(cfg.seed);
    std::int64_t start = 0;
    std::uint64_t consumed = 0;
    if (resume != nullptr) {
        restore_optimizer(opt, *resume);
        rng.set_state(resume->rng_state);
        data.skip(resume->examples_consumed);
        consumed = resume->examples_consumed;
        start = resume->step;
    }
    Loop loop{cfg, data, blocks, opt, {}, {}, {}, hook, consumed};
    loop.compute = [&](const std::vector<TaskExample>& batch) {
        blocks[0].touched = true;
        return batch_loss(backbone, nullptr, batch, &blocks[0].grad, nullptr);
    };
    loop.snapshot = [&](std::int64_t step, double loss) {
        Checkpoint c = base_checkpoint(step, loss, "backbone", backbone, cfg, opt, loop.consumed, rng);
        c.backbone_fingerprint = backbone.fingerprint();
        c.backbone_config = backbone.config();
        c.backbone_params.assign(backbone.parameters().begin(), backbone.parameters().end());
        return c;
    };
    return loop.run(start);
}

void require_frozen(const Backbone& backbone) {
    if (!backbone.frozen()) {
        throw InvariantError("prompt training needs a frozen backbone");
    }
}

} // namespace

TrainResult pretrain_backbone(Backbone& backbone, ExampleStream& data, const TrainConfig& cfg,
                              const Checkpoint* resume, const StepHook& hook) {
    TrainResult r = train_full(backbone, data, cfg, resume, hook);
    backbone.freeze();
    return r;
}

TrainResult train_model(Backbone& backbone, ExampleStream& data, const TrainConfig& cfg, const Checkpoint* resume,
                        const StepHook& hook) {
    return train_full(backbone, data, cfg, resume, hook);
}

Prompt initial_prompt(const Backbone& backbone, int length, std::uint64_t seed, int sample_hi) {
    Rng rng(Rng::derive(seed, "prompt-init"));
    return Prompt::sample_vocab(backbone, length, rng, kNumSpecial, sample_hi);
}

TrainResult train_prompt(const Backbone& backbone, Prompt init, ExampleStream& data, const TrainConfig& cfg,
                         const Checkpoint* resume, const StepHook& hook) {
    cfg.validate();
    require_frozen(backbone);
    check_resume(resume, "prompt", cfg);
    if (init.length() < 1 || init.d_model() != backbone.config().d_model || !init.finite()) {
        throw InputError("initial prompt must have at least one finite row of width d_model");
    }
    const std::string fingerprint = backbone.fingerprint();
    Prompt prompt = resume != nullptr ? resume->prompt("prompt") : std::move(init);
    if (resume != nullptr && resume->backbone_fingerprint != fingerprint) {
        throw InvariantError("resume checkpoint was trained against a different backbone");
    }
    std::vector<Block> blocks(1);
    blocks[0].name = "prompt";
    blocks[0].values = std::span<double>(prompt.values().data(), static_cast<std::size_t>(prompt.values().size()));
    blocks[0].grad.assign(blocks[0].values.size(), 0.0);
    Optimizer opt = make_optimizer(cfg, blocks);
    Rng rng(cfg.seed);
    std::int64_t start = 0;
    std::uint64_t consumed = 0;
    if (resume != nullptr) {
        restore_optimizer(opt, *resume);
        rng.set_state(resume->rng_state);
        data.skip(resume->examples_consumed);
        consumed = resume->examples_consumed;
        start = resume->step;
    }
    Loop loop{cfg, data, blocks, opt, {}, {}, {}, hook, consumed};
    Mat grad(prompt.length(), prompt.d_model());
    loop.compute = [&](const std::vector<TaskExample>& batch) {
        grad.setZero();
        const double loss = batch_loss(backbone, &prompt, batch, nullptr, &grad);
        std::copy(grad.data(), grad.data() + grad.size(), blocks[0].grad.begin());
        blocks[0].touched = true;
        return loss;
    };
    loop.snapshot = [&](std::int64_t step, double loss) {
        if (backbone.fingerprint() != fingerprint) {
            throw InvariantError("backbone fingerprint changed during prompt tuning");
        }
        Checkpoint c = base_checkpoint(step, loss, "prompt", backbone, cfg, opt, loop.consumed, rng);
        c.backbone_fingerprint = fingerprint;
        c.prompts.emplace("prompt", prompt);
        return c;
    };
    TrainResult r = loop.run(start);
    if (backbone.fingerprint() != fingerprint) {
        throw InvariantError("backbone fingerprint changed during prompt tuning");
    }
    return r;
}

FactorizedPrompt FactorizedPrompts::pair(const std::string& lang, const std::string& task_name) const {
    const auto l = language.find(lang);
    const auto t = task.find(task_name);
    if (l == language.end()) {
        throw InputError("no language sub-prompt for '" + lang + "'");
    }
    if (t == task.end()) {
        throw InputError("no task sub-prompt for '" + task_name + "'");
    }
    return FactorizedPrompt{l->second, t->second};
}

std::size_t FactorizedPrompts::trainable_parameters() const {
    std::size_t n = 0;
    for (const auto& [_, p] : language) {
        n += static_cast<std::size_t>(p.values().size());
    }
    for (const auto& [_, p] : task) {
        n += static_cast<std::size_t>(p.values().size());
    }
    return n;
}

FactorizedPrompts factorized_from_checkpoint(const Checkpoint& ckpt) {
    FactorizedPrompts f;
    for (const auto& [name, p] : ckpt.prompts) {
        if (name.rfind("lang/", 0) == 0) {
            f.language.emplace(name.substr(5), p);
        } else if (name.rfind("task/", 0) == 0) {
            f.task.emplace(name.substr(5), p);
        }
    }
    if (f.language.empty() || f.task.empty()) {
        throw InputError("checkpoint at step " + std::to_string(ckpt.step) + " holds no factorized prompts");
    }
    return f;
}

FactorizedResult train_factorized(const Backbone& backbone, const std::vector<std::string>& languages,
                                  const std::vector<TaskKind>& tasks, ExampleStream& data, const TrainConfig& cfg,
                                  int sub_length, double init_scale, const Checkpoint* resume, const StepHook& hook) {
    cfg.validate();
    require_frozen(backbone);
    check_resume(resume, "factorized", cfg);
    if (languages.size() < 2) {
        throw ConfigError("factorized training needs at least two languages");
    }
    if (tasks.empty()) {
        throw ConfigError("factorized training needs at least one task");
    }
    if (sub_length < 1) {
        throw ConfigError("sub-prompt length must be positive");
    }
    const int d = backbone.config().d_model;
    const std::string fingerprint = backbone.fingerprint();
    Rng rng(cfg.seed);
    FactorizedPrompts prompts;
    if (resume != nullptr) {
        if (resume->backbone_fingerprint != fingerprint) {
            throw InvariantError("resume checkpoint was trained against a different backbone");
        }
        prompts = factorized_from_checkpoint(*resume);
    } else {
        for (const auto& l : languages) {
            if (!prompts.language.emplace(l, Prompt::random_uniform(sub_length, d, rng, init_scale)).second) {
                throw ConfigError("duplicate language '" + l + "'");
            }
        }
        for (const auto t : tasks) {
            if (!prompts.task.emplace(task_name(t), Prompt::random_uniform(sub_length, d, rng, init_scale)).second) {
                throw ConfigError("duplicate task '" + task_name(t) + "'");
            }
        }
    }
    std::vector<Block> blocks;
    std::map<std::string, std::size_t> lang_block;
    std::map<std::string, std::size_t> task_block;
    for (auto& [name, p] : prompts.language) {
        lang_block[name] = blocks.size();
        blocks.push_back({"lang/" + name, std::span<double>(p.values().data(), static_cast<std::size_t>(p.values().size())),
                          std::vector<double>(static_cast<std::size_t>(p.values().size()), 0.0), false});
    }
    for (auto& [name, p] : prompts.task) {
        task_block[name] = blocks.size();
        blocks.push_back({"task/" + name, std::span<double>(p.values().data(), static_cast<std::size_t>(p.values().size())),
                          std::vector<double>(static_cast<std::size_t>(p.values().size()), 0.0), false});
    }
    Optimizer opt = make_optimizer(cfg, blocks);
    std::int64_t start = 0;
    std::uint64_t consumed = 0;
    if (resume != nullptr) {
        restore_optimizer(opt, *resume);
        rng.set_state(resume->rng_state);
        data.skip(resume->examples_consumed);
        consumed = resume->examples_consumed;
        start = resume->step;
    }
    Loop loop{cfg, data, blocks, opt, {}, {}, {}, hook, consumed};
    std::vector<std::vector<double>> before(blocks.size());
    loop.compute = [&](const std::vector<TaskExample>& batch) {
        double total = 0.0;
        const double scale = 1.0 / static_cast<double>(batch.size());
        for (const auto& ex : batch) {
            const auto li = lang_block.find(ex.language);
            const auto ti = task_block.find(ex.task);
            if (li == lang_block.end() || ti == task_block.end()) {
                throw InputError("example for (" + ex.language + ", " + ex.task + ") has no sub-prompt pair");
            }
            const Prompt composed = compose_prompt(prompts.pair(ex.language, ex.task));
            Mat g = Mat::Zero(composed.length(), d);
            GradSink sink{nullptr, &g, scale};
            total += example_loss(backbone, &composed.values(), ex, &sink);
            const auto half = static_cast<std::size_t>(sub_length) * static_cast<std::size_t>(d);
            Block& lb = blocks[li->second];
            Block& tb = blocks[ti->second];
            for (std::size_t i = 0; i < half; ++i) {
                lb.grad[i] += g.data()[i];
                tb.grad[i] += g.data()[half + i];
            }
            lb.touched = true;
            tb.touched = true;
        }
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            if (!blocks[i].touched) {
                before[i].assign(blocks[i].values.begin(), blocks[i].values.end());
            }
        }
        return total * scale;
    };
    loop.after_step = [&] {
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            if (!blocks[i].touched &&
                !std::equal(blocks[i].values.begin(), blocks[i].values.end(), before[i].begin(), before[i].end())) {
                throw InvariantError("sub-prompt '" + blocks[i].name + "' changed without taking part in the step");
            }
        }
    };
    loop.snapshot = [&](std::int64_t step, double loss) {
        if (backbone.fingerprint() != fingerprint) {
            throw InvariantError("backbone fingerprint changed during factorized training");
        }
        Checkpoint c = base_checkpoint(step, loss, "factorized", backbone, cfg, opt, loop.consumed, rng);
        c.backbone_fingerprint = fingerprint;
        for (const auto& [name, p] : prompts.language) {
            c.prompts.emplace("lang/" + name, p);
        }
        for (const auto& [name, p] : prompts.task) {
            c.prompts.emplace("task/" + name, p);
        }
        return c;
    };
    TrainResult r = loop.run(start);
    return FactorizedResult{prompts, std::move(r.losses), std::move(r.checkpoints)};
}

TrainResult train_downstream_task_half(const Backbone& backbone, const Prompt& language_half, Prompt task_init,
                                       ExampleStream& data, const TrainConfig& cfg, const Checkpoint* resume,
                                       const StepHook& hook) {
    cfg.validate();
    require_frozen(backbone);
    check_resume(resume, "task_half", cfg);
    if (task_init.d_model() != language_half.d_model() || language_half.d_model() != backbone.config().d_model) {
        throw InputError("sub-prompt widths do not match the backbone");
    }
    const std::string fingerprint = backbone.fingerprint();
    const std::string lang_fingerprint = language_half.fingerprint();
    Prompt task = resume != nullptr ? resume->prompt("task") : std::move(task_init);
    if (resume != nullptr && resume->prompt("language").fingerprint() != lang_fingerprint) {
        throw InputError("resume checkpoint used a different language sub-prompt");
    }
    std::vector<Block> blocks(1);
    blocks[0].name = "task";
    blocks[0].values = std::span<double>(task.values().data(), static_cast<std::size_t>(task.values().size()));
    blocks[0].grad.assign(blocks[0].values.size(), 0.0);
    Optimizer opt = make_optimizer(cfg, blocks);
    Rng rng(cfg.seed);
    std::int64_t start = 0;
    std::uint64_t consumed = 0;
    if (resume != nullptr) {
        restore_optimizer(opt, *resume);
        rng.set_state(resume->rng_state);
        data.skip(resume->examples_consumed);
        consumed = resume->examples_consumed;
        start = resume->step;
    }
    Loop loop{cfg, data, blocks, opt, {}, {}, {}, hook, consumed};
    const int ell_lang = language_half.length();
    loop.compute = [&](const std::vector<TaskExample>& batch) {
        const Prompt composed = compose_prompt(FactorizedPrompt{language_half, task});
        Mat g = Mat::Zero(composed.length(), composed.d_model());
        const double loss = batch_loss(backbone, &composed, batch, nullptr, &g);
        const auto off = static_cast<std::size_t>(ell_lang) * static_cast<std::size_t>(composed.d_model());
        std::copy(g.data() + off, g.data() + g.size(), blocks[0].grad.begin());
        blocks[0].touched = true;
        return loss;
    };
    loop.after_step = [&] {
        if (language_half.fingerprint() != lang_fingerprint) {
            throw InvariantError("language sub-prompt drifted during task-half training");
        }
    };
    loop.snapshot = [&](std::int64_t step, double loss) {
        if (backbone.fingerprint() != fingerprint) {
            throw InvariantError("backbone fingerprint changed during task-half training");
        }
        Checkpoint c = base_checkpoint(step, loss, "task_half", backbone, cfg, opt, loop.consumed, rng);
        c.backbone_fingerprint = fingerprint;
        c.prompts.emplace("language", language_half);
        c.prompts.emplace("task", task);
        return c;
    };
    return loop.run(start);
}

} // namespace xgkit
