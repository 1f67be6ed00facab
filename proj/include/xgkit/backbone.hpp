#pragma once

#include "xgkit/random.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace xgkit {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

struct BackboneConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_enc_layers = 2;
    int n_dec_layers = 2;
    int ffn_dim = 256;
    int vocab_size = 512; // full id space, sentinels included
    int max_len = 256;    // positions per side; prompt rows carry no position
    bool tie_embeddings = true;

    void validate() const;
    std::size_t parameter_count() const;
    std::string to_json() const;
    static BackboneConfig from_json(const std::string& text);
    std::string hash() const;

    bool operator==(const BackboneConfig&) const = default;
};

struct ParamInfo {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

struct AttentionParams {
    std::size_t wq = 0, wk = 0, wv = 0, wo = 0;
};

struct EncoderLayerParams {
    std::size_t norm1 = 0;
    AttentionParams self;
    std::size_t norm2 = 0, ffn_in = 0, ffn_out = 0;
};

struct DecoderLayerParams {
    std::size_t norm1 = 0;
    AttentionParams self;
    std::size_t norm2 = 0;
    AttentionParams cross;
    std::size_t norm3 = 0, ffn_in = 0, ffn_out = 0;
};

// Offsets of every tensor inside the flat parameter vector.
struct ParamLayout {
    std::size_t tok_emb = 0, enc_pos = 0, dec_pos = 0, enc_norm = 0, dec_norm = 0, out_proj = 0;
    std::vector<EncoderLayerParams> enc;
    std::vector<DecoderLayerParams> dec;
    std::vector<ParamInfo> entries;
    std::size_t total = 0;

    static ParamLayout build(const BackboneConfig& cfg);
};

// Frozen-able encoder-decoder parameters stored in one flat vector.
class Backbone {
public:
    Backbone() = default;
    Backbone(BackboneConfig config, std::vector<double> params);

    // Scaled-uniform init: matrices U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    // embeddings and positions U(-0.5, 0.5), norm gains 1.
    static Backbone init(const BackboneConfig& config, std::uint64_t seed);

    const BackboneConfig& config() const { return config_; }
    const ParamLayout& layout() const { return layout_; }
    std::span<const double> parameters() const { return params_; }
    std::span<double> mutable_parameters();
    const double* data() const { return params_.data(); }

    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }
    void unfreeze() { frozen_ = false; }

    std::string fingerprint() const;

    ConstMatMap matrix(std::size_t offset, int rows, int cols) const {
        return ConstMatMap(params_.data() + offset, rows, cols);
    }
    ConstMatMap output_projection() const;

private:
    BackboneConfig config_;
    ParamLayout layout_;
    std::vector<double> params_;
    bool frozen_ = false;
};

// Prompt: ell x d_model virtual-token embeddings prepended to the encoder input.
class Prompt {
public:
    Prompt() = default;
    explicit Prompt(Mat values);
    Prompt(int length, int d_model) : values_(Mat::Zero(length, d_model)) {}

    int length() const { return static_cast<int>(values_.rows()); }
    int d_model() const { return static_cast<int>(values_.cols()); }
    const Mat& values() const { return values_; }
    Mat& values() { return values_; }
    bool finite() const { return values_.allFinite(); }
    std::string fingerprint() const;

    // Rows copied from the embeddings of uniformly drawn ids in [lo, hi).
    static Prompt sample_vocab(const Backbone& backbone, int length, Rng& rng, int lo = 3, int hi = -1);
    static Prompt random_uniform(int length, int d_model, Rng& rng, double scale = 0.5);

    bool operator==(const Prompt& o) const { return values_ == o.values_; }

private:
    Mat values_;
};

inline constexpr int kDefaultPromptLength = 100;
inline constexpr int kDefaultSubPromptLength = 50;

struct FactorizedPrompt {
    Prompt language_half;
    Prompt task_half;
};

// Row-wise concatenation, language half first.
Prompt compose_prompt(const FactorizedPrompt& f);
FactorizedPrompt swap_language(const FactorizedPrompt& f, const Prompt& target_half);

} // namespace xgkit
