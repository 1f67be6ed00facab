#include "xgkit/evaluation.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/transformer.hpp"

#include <algorithm>

namespace xgkit {

TaskExample summarization_example(const SummExample& ex, const SubwordModel& tokenizer, const BackboneConfig& cfg) {
    TaskExample t;
    t.inputs = tokenizer.encode(ex.document);
    t.targets = tokenizer.encode(ex.summary);
    t.task = "summarization";
    t.language = ex.language;
    return clip_example(std::move(t), max_input_tokens(cfg), max_target_tokens(cfg));
}

std::vector<TaskExample> summarization_examples(const std::vector<SummExample>& data, const SubwordModel& tokenizer,
                                                const BackboneConfig& cfg) {
    std::vector<TaskExample> out;
    out.reserve(data.size());
    for (const auto& ex : data) {
        out.push_back(summarization_example(ex, tokenizer, cfg));
    }
    return out;
}

std::vector<std::string> predict_summaries(const Backbone& backbone, const Prompt* prompt,
                                           const std::vector<SummExample>& data, const SubwordModel& tokenizer,
                                           const DecodeConfig& decode) {
    const Mat* p = prompt != nullptr ? &prompt->values() : nullptr;
    std::vector<std::string> out;
    out.reserve(data.size());
    for (const auto& ex : data) {
        const TokenIds inputs = tokenizer.encode(ex.document);
        const auto ids = decode_beam(backbone, p, inputs, decode);
        out.push_back(tokenizer.decode(ids));
    }
    return out;
}

CheckpointPredictor model_predictor(const Backbone* backbone, const SubwordModel& tokenizer, DecodeConfig decode,
                                    PromptSource prompt_for) {
    return [backbone, &tokenizer, decode, prompt_for](const Checkpoint& ckpt, const std::vector<SummExample>& data) {
        if (ckpt.backbone_config) {
            const Backbone own = ckpt.backbone();
            return predict_summaries(own, nullptr, data, tokenizer, decode);
        }
        if (backbone == nullptr) {
            throw InputError("checkpoint at step " + std::to_string(ckpt.step) + " needs a backbone to decode");
        }
        if (backbone->fingerprint() != ckpt.backbone_fingerprint) {
            throw InputError("checkpoint at step " + std::to_string(ckpt.step) +
                             " was trained against a different backbone");
        }
        const std::optional<Prompt> prompt = prompt_for ? prompt_for(ckpt) : std::nullopt;
        return predict_summaries(*backbone, prompt ? &*prompt : nullptr, data, tokenizer, decode);
    };
}

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const std::vector<SummExample>& data, const EvalContext& ctx) {
    if (ctx.tokenizer == nullptr || ctx.lid == nullptr || !ctx.predict) {
        throw ConfigError("evaluation context needs a tokenizer, an LID model and a predictor");
    }
    if (data.empty()) {
        throw InputError("evaluation set is empty");
    }
    if (!ctx.lid->knows(ctx.target_language)) {
        throw InputError("LID model has no language '" + ctx.target_language + "'");
    }
    const auto texts = ctx.predict(ckpt, data);
    if (texts.size() != data.size()) {
        throw InvariantError("predictor returned " + std::to_string(texts.size()) + " outputs for " +
                             std::to_string(data.size()) + " examples");
    }
    std::vector<Prediction> preds;
    std::vector<std::string> refs;
    for (std::size_t i = 0; i < data.size(); ++i) {
        preds.push_back({texts[i], ctx.target_language});
        refs.push_back(data[i].summary);
    }
    EvalOptions opts;
    opts.trim = ctx.trim;
    opts.source_language = ctx.source_language;
    opts.checkpoint_step = ckpt.step;
    return corpus_eval(preds, refs, *ctx.tokenizer, *ctx.lid, opts);
}

Selection select_checkpoint(const std::vector<Checkpoint>& checkpoints, const std::vector<SummExample>& validation,
                            const EvalContext& ctx) {
    if (checkpoints.empty()) {
        throw InputError("no checkpoints to select from");
    }
    if (validation.empty()) {
        throw InputError("validation set is empty");
    }
    Selection sel;
    if (checkpoints.size() == 1) {
        return sel;
    }
    const std::vector<SummExample> val(validation.begin(),
                                       validation.begin() + static_cast<std::ptrdiff_t>(
                                                                std::min(validation.size(), kValidationExamples)));
    for (const auto& ckpt : checkpoints) {
        const EvalReport rep = evaluate_checkpoint(ckpt, val, ctx);
        sel.scores.push_back(rep.per_language.at(ctx.target_language).sp_rg_lsum);
    }
    for (std::size_t i = 1; i < checkpoints.size(); ++i) {
        const double best = sel.scores[sel.index];
        const bool earlier = checkpoints[i].step < checkpoints[sel.index].step;
        if (sel.scores[i] > best || (sel.scores[i] == best && earlier)) {
            sel.index = i;
        }
    }
    return sel;
}

} // namespace xgkit
