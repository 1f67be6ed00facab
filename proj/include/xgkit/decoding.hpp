#pragma once

#include "xgkit/backbone.hpp"

#include <span>
#include <vector>

namespace xgkit {

struct DecodeConfig {
    int beam_size = 4;
    double length_penalty_alpha = 0.6;
    int max_decode_len = 64;

    void validate() const;
};

// ((5 + len) / 6)^alpha
double length_penalty(int len, double alpha);

struct Hypothesis {
    std::vector<int> tokens; // includes the final EOS when finished
    double logprob = 0.0;
    bool finished = false;
    double score(double alpha) const;
};

// Argmax per step, lowest id on ties, until EOS or max_len. EOS is not returned.
std::vector<int> decode_greedy(const Backbone& backbone, const Mat* prompt, std::span<const int> inputs, int max_len);

// Beam search: every step keeps the beam_size best extensions by raw
// log-probability; extensions ending in EOS retire to the finished set.
// Hypotheses still alive at max_len compete as well. The result maximizes
// logprob / lp(|Y|) with |Y| counting EOS; ties go to the
// lexicographically smaller sequence. EOS is not returned.
std::vector<int> decode_beam(const Backbone& backbone, const Mat* prompt, std::span<const int> inputs,
                             const DecodeConfig& cfg);

// All retired and surviving hypotheses of a beam run, for inspection.
std::vector<Hypothesis> beam_candidates(const Backbone& backbone, const Mat* prompt, std::span<const int> inputs,
                                        const DecodeConfig& cfg);

// Log-probability of a full decoder continuation under teacher forcing.
double sequence_logprob(const Backbone& backbone, const Mat* prompt, std::span<const int> inputs,
                        std::span<const int> tokens);

} // namespace xgkit
