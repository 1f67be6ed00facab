#include "xgkit/optimizer.hpp"

#include "xgkit/errors.hpp"

#include <cmath>

namespace xgkit {

void OptimizerConfig::validate() const {
    if (kind != "sgd" && kind != "adam") {
        throw ConfigError("unknown optimizer '" + kind + "' (expected sgd or adam)");
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw ConfigError("learning rate must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
        throw ConfigError("adam hyperparameters out of range");
    }
    if (clip_norm < 0.0) {
        throw ConfigError("clip_norm must be non-negative");
    }
}

std::size_t Optimizer::add_block(std::string name, std::size_t size) {
    Block b;
    b.name = std::move(name);
    if (cfg_.kind == "adam") {
        b.m.assign(size, 0.0);
        b.v.assign(size, 0.0);
    }
    blocks_.push_back(std::move(b));
    return blocks_.size() - 1;
}

std::size_t Optimizer::block_index(const std::string& name) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (blocks_[i].name == name) {
            return i;
        }
    }
    throw InvariantError("optimizer has no block named '" + name + "'");
}

void Optimizer::step(std::size_t block, std::span<double> values, std::span<const double> grad) {
    Block& b = blocks_.at(block);
    if (values.size() != grad.size()) {
        throw InvariantError("gradient size does not match block '" + b.name + "'");
    }
    ++b.t;
    if (cfg_.kind == "sgd") {
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] -= cfg_.lr * grad[i];
        }
        return;
    }
    if (b.m.size() != values.size()) {
        throw InvariantError("adam state size does not match block '" + b.name + "'");
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(b.t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(b.t));
    for (std::size_t i = 0; i < values.size(); ++i) {
        b.m[i] = cfg_.beta1 * b.m[i] + (1.0 - cfg_.beta1) * grad[i];
        b.v[i] = cfg_.beta2 * b.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        const double mhat = b.m[i] / c1;
        const double vhat = b.v[i] / c2;
        values[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
}

double clip_global_norm(const std::vector<std::span<double>>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads) {
        for (const double x : g) {
            sq += x * x;
        }
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (const auto& g : grads) {
            for (double& x : g) {
                x *= s;
            }
        }
    }
    return norm;
}

} // namespace xgkit
