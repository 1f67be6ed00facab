#pragma once

#include "xgkit/backbone.hpp"
#include "xgkit/checkpoint.hpp"
#include "xgkit/optimizer.hpp"
#include "xgkit/tasks.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace xgkit {

struct TrainConfig {
    int steps = 1000;
    int batch_size = 8;
    int checkpoint_every = 0; // 0: a single checkpoint after the last step
    std::uint64_t seed = 0;
    OptimizerConfig optimizer;
    std::string data_hash;   // recorded in checkpoints
    std::string dump_path;   // where a diagnostic dump goes when the loss turns non-finite

    void validate() const;
};

struct TrainResult {
    std::vector<double> losses; // one per update, before the update is applied
    std::vector<Checkpoint> checkpoints;
};

// Called after every update with (step, loss); handy for progress logs.
using StepHook = std::function<void(std::int64_t, double)>;

// Full-parameter training. pretrain_backbone freezes the backbone when done;
// train_model leaves it trainable. A resume checkpoint restores parameters
// and optimizer state and fast-forwards the stream (which must be freshly
// constructed with the original seed) past the examples already consumed.
TrainResult pretrain_backbone(Backbone& backbone, ExampleStream& data, const TrainConfig& cfg,
                              const Checkpoint* resume = nullptr, const StepHook& hook = {});
TrainResult train_model(Backbone& backbone, ExampleStream& data, const TrainConfig& cfg,
                        const Checkpoint* resume = nullptr, const StepHook& hook = {});

// Prompt initialized from vocabulary embeddings of ordinary (non-special,
// non-sentinel) ids; deterministic per seed.
Prompt initial_prompt(const Backbone& backbone, int length, std::uint64_t seed, int sample_hi = -1);

// Prompt tuning on a frozen backbone. Checkpoints hold prompt "prompt".
TrainResult train_prompt(const Backbone& backbone, Prompt init, ExampleStream& data, const TrainConfig& cfg,
                         const Checkpoint* resume = nullptr, const StepHook& hook = {});

struct FactorizedPrompts {
    std::map<std::string, Prompt> language;
    std::map<std::string, Prompt> task;

    FactorizedPrompt pair(const std::string& lang, const std::string& task_name) const;
    std::size_t trainable_parameters() const;
};

struct FactorizedResult {
    FactorizedPrompts prompts;
    std::vector<double> losses;
    std::vector<Checkpoint> checkpoints; // prompts named "lang/<code>" and "task/<name>"
};

// Every example names its language and task; the matching sub-prompts are
// composed and only those two receive gradient. All sub-prompts start from
// U(-init_scale, init_scale).
FactorizedResult train_factorized(const Backbone& backbone, const std::vector<std::string>& languages,
                                  const std::vector<TaskKind>& tasks, ExampleStream& data, const TrainConfig& cfg,
                                  int sub_length = kDefaultSubPromptLength, double init_scale = 0.5,
                                  const Checkpoint* resume = nullptr, const StepHook& hook = {});

FactorizedPrompts factorized_from_checkpoint(const Checkpoint& ckpt);

// Trains a new task half next to a frozen language half. Checkpoints hold
// prompts "language" and "task".
TrainResult train_downstream_task_half(const Backbone& backbone, const Prompt& language_half, Prompt task_init,
                                       ExampleStream& data, const TrainConfig& cfg,
                                       const Checkpoint* resume = nullptr, const StepHook& hook = {});

} // namespace xgkit
