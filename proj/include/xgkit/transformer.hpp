#pragma once

#include "xgkit/backbone.hpp"
#include "xgkit/example.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace xgkit {

// Text clipping applied before the prompt is prepended: at most 1024 input
// tokens, at most 512 target tokens, further bounded by the position tables.
int max_input_tokens(const BackboneConfig& cfg);
int max_target_tokens(const BackboneConfig& cfg); // excludes the appended EOS

// Where gradients go. Either pointer may be null; the backbone is never written.
struct GradSink {
    std::vector<double>* params = nullptr; // same layout as Backbone::parameters()
    Mat* prompt = nullptr;                 // same shape as the prompt
    double scale = 1.0;                    // multiplies d loss / d theta
};

// Mean token cross-entropy of targets + EOS under teacher forcing. prompt
// may be null or empty. Accumulates scale * gradient into sink when given.
double example_loss(const Backbone& backbone, const Mat* prompt, const TaskExample& ex, const GradSink* sink = nullptr);

double forward_loss(const Backbone& backbone, const Prompt* prompt, const TaskExample& ex);

// Mean of per-example losses, with its gradient accumulated into the sink.
double batch_loss(const Backbone& backbone, const Prompt* prompt, std::span<const TaskExample> batch,
                  std::vector<double>* param_grad = nullptr, Mat* prompt_grad = nullptr);

// Gradient of the mean batch loss w.r.t. the prompt only. Requires a frozen backbone.
Mat prompt_grad(const Backbone& backbone, const Prompt& prompt, std::span<const TaskExample> batch);

// Incremental inference.
struct EncodedInput {
    Mat memory;                // encoder output, (ell + n) x d
    std::vector<Mat> cross_k;  // per decoder layer
    std::vector<Mat> cross_v;
};

struct DecoderState {
    std::vector<Mat> self_k; // per layer, one row per consumed token
    std::vector<Mat> self_v;
    int position = 0;
};

EncodedInput encode_input(const Backbone& backbone, const Mat* prompt, std::span<const int> inputs);

// Feeds one decoder token (the first is always PAD) and returns
// log-probabilities of the next token.
Eigen::VectorXd decoder_step(const Backbone& backbone, const EncodedInput& enc, DecoderState& state, int token);

} // namespace xgkit
