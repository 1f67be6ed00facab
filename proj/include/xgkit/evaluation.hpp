#pragma once

#include "xgkit/checkpoint.hpp"
#include "xgkit/corpus.hpp"
#include "xgkit/decoding.hpp"
#include "xgkit/langid.hpp"
#include "xgkit/metrics.hpp"
#include "xgkit/tokenizer.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace xgkit {

inline constexpr std::size_t kValidationExamples = 250;

// Document -> summary as a model example, clipped to the backbone limits.
TaskExample summarization_example(const SummExample& ex, const SubwordModel& tokenizer, const BackboneConfig& cfg);
std::vector<TaskExample> summarization_examples(const std::vector<SummExample>& data, const SubwordModel& tokenizer,
                                                const BackboneConfig& cfg);

std::vector<std::string> predict_summaries(const Backbone& backbone, const Prompt* prompt,
                                           const std::vector<SummExample>& data, const SubwordModel& tokenizer,
                                           const DecodeConfig& decode);

// Produces one prediction per example for the model state in a checkpoint.
using CheckpointPredictor =
    std::function<std::vector<std::string>(const Checkpoint&, const std::vector<SummExample>&)>;

// Which prompt to decode with for a checkpoint; nullopt means no prompt.
using PromptSource = std::function<std::optional<Prompt>(const Checkpoint&)>;

// Decodes with the checkpoint's own backbone when it carries one, otherwise
// with `backbone` and the prompt chosen by `prompt_for`.
CheckpointPredictor model_predictor(const Backbone* backbone, const SubwordModel& tokenizer, DecodeConfig decode,
                                    PromptSource prompt_for);

struct EvalContext {
    const SubwordModel* tokenizer = nullptr;
    const LidModel* lid = nullptr;
    std::string target_language;
    std::string source_language = "en";
    bool trim = true;
    CheckpointPredictor predict;
};

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const std::vector<SummExample>& data, const EvalContext& ctx);

struct Selection {
    std::size_t index = 0;
    std::vector<double> scores; // SP-RG-Lsum per checkpoint; empty when there was nothing to compare
};

// Argmax of SP-RG-Lsum for the target language over the first 250
// validation examples; ties go to the earliest step.
Selection select_checkpoint(const std::vector<Checkpoint>& checkpoints, const std::vector<SummExample>& validation,
                            const EvalContext& ctx);

} // namespace xgkit
