#pragma once

#include "xgkit/backbone.hpp"
#include "xgkit/optimizer.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace xgkit {

// Snapshot of a training run after `step` updates. Prompt-only kinds carry
// just their prompt arrays plus the fingerprint of the frozen backbone.
struct Checkpoint {
    std::int64_t step = 0;
    std::string kind; // "backbone", "prompt", "factorized" or "task_half"
    std::string config_hash;
    std::string backbone_fingerprint;
    std::string data_hash;
    std::uint64_t examples_consumed = 0;
    std::string rng_state;
    double loss = 0.0; // loss of the last update

    std::optional<BackboneConfig> backbone_config;
    std::vector<double> backbone_params;
    std::map<std::string, Prompt> prompts;

    OptimizerConfig optimizer_config;
    std::vector<Optimizer::Block> optimizer_state;

    Backbone backbone() const; // kind "backbone" only
    const Prompt& prompt(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Zero-padded step file name, e.g. ckpt-000500.bin.
std::string checkpoint_filename(std::int64_t step);

} // namespace xgkit
