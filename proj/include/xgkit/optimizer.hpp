#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace xgkit {

struct OptimizerConfig {
    std::string kind = "sgd"; // "sgd" or "adam"
    double lr = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0; // global gradient-norm clip per step; 0 disables

    void validate() const;
    bool operator==(const OptimizerConfig&) const = default;
};

// Named parameter blocks. Adam moments and step counts are kept per block
// and only advance when the block receives a gradient, so blocks that sit
// out a step are left exactly as they were.
class Optimizer {
public:
    struct Block {
        std::string name;
        std::vector<double> m;
        std::vector<double> v;
        std::int64_t t = 0;
    };

    Optimizer() = default;
    explicit Optimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

    std::size_t add_block(std::string name, std::size_t size);
    std::size_t block_index(const std::string& name) const;

    void step(std::size_t block, std::span<double> values, std::span<const double> grad);

    const OptimizerConfig& config() const { return cfg_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    std::vector<Block>& blocks() { return blocks_; }

private:
    OptimizerConfig cfg_;
    std::vector<Block> blocks_;
};

// Scales the gradients in place so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(const std::vector<std::span<double>>& grads, double max_norm);

} // namespace xgkit
