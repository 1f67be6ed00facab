#include "xgkit/decoding.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/tokenizer.hpp"
#include "xgkit/transformer.hpp"

#include <algorithm>
#include <cmath>

namespace xgkit {

void DecodeConfig::validate() const {
    if (beam_size < 1) {
        throw ConfigError("beam_size must be at least 1");
    }
    if (max_decode_len < 1) {
        throw ConfigError("max_decode_len must be at least 1");
    }
    if (!std::isfinite(length_penalty_alpha)) {
        throw ConfigError("length penalty alpha must be finite");
    }
}

double length_penalty(int len, double alpha) {
    return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
}

double Hypothesis::score(double alpha) const {
    return logprob / length_penalty(static_cast<int>(tokens.size()), alpha);
}

namespace {

int decode_limit(const Backbone& backbone, int max_len) {
    return std::min(max_len, backbone.config().max_len);
}

struct Beam {
    std::vector<int> tokens;
    double logprob = 0.0;
    DecoderState state;
    Eigen::VectorXd next; // log-probs after the last token
};

} // namespace

std::vector<int> decode_greedy(const Backbone& backbone, const Mat* prompt, std::span<const int> inputs, int max_len) {
    const EncodedInput enc = encode_input(backbone, prompt, inputs);
    DecoderState state;
    Eigen::VectorXd lp = decoder_step(backbone, enc, state, kPadId);
    std::vector<int> out;
    const int limit = decode_limit(backbone, max_len);
    while (static_cast<int>(out.size()) < limit) {
        Eigen::Index best = 0;
        lp.maxCoeff(&best); // first maximum, i.e. lowest id
        if (best == kEosId) {
            break;
        }
        out.push_back(static_cast<int>(best));
        if (static_cast<int>(out.size()) == limit) {
            break;
        }
        lp = decoder_step(backbone, enc, state, static_cast<int>(best));
    }
    return out;
}

std::vector<Hypothesis> beam_candidates(const Backbone& backbone, const Mat* prompt, std::span<const int> inputs,
                                        const DecodeConfig& cfg) {
    cfg.validate();
    const EncodedInput enc = encode_input(backbone, prompt, inputs);
    const int limit = decode_limit(backbone, cfg.max_decode_len);
    const int vocab = backbone.config().vocab_size;

    std::vector<Beam> alive(1);
    alive[0].next = decoder_step(backbone, enc, alive[0].state, kPadId);
    std::vector<Hypothesis> finished;

    struct Cand {
        std::size_t beam;
        int token;
        double logprob;
    };
    for (int t = 0; t < limit && !alive.empty(); ++t) {
        std::vector<Cand> cands;
        cands.reserve(alive.size() * static_cast<std::size_t>(vocab));
        for (std::size_t b = 0; b < alive.size(); ++b) {
            for (int v = 0; v < vocab; ++v) {
                cands.push_back({b, v, alive[b].logprob + alive[b].next(v)});
            }
        }
        // Raw log-prob order; ties by the lexicographically smaller sequence.
        auto better = [&alive](const Cand& x, const Cand& y) {
            if (x.beam == y.beam) {
                // Same prefix: compare the step log-probs directly so rounding
                // in the running sum cannot manufacture a tie.
                const double px = alive[x.beam].next(x.token);
                const double py = alive[y.beam].next(y.token);
                return px != py ? px > py : x.token < y.token;
            }
            if (x.logprob != y.logprob) {
                return x.logprob > y.logprob;
            }
            const auto& tx = alive[x.beam].tokens;
            const auto& ty = alive[y.beam].tokens;
            if (tx != ty) {
                return tx < ty;
            }
            return x.token < y.token;
        };
        const auto keep = std::min<std::size_t>(static_cast<std::size_t>(cfg.beam_size), cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);
        std::vector<Beam> next_alive;
        for (std::size_t i = 0; i < keep; ++i) {
            const Cand& cand = cands[i];
            std::vector<int> tokens = alive[cand.beam].tokens;
            tokens.push_back(cand.token);
            if (cand.token == kEosId) {
                finished.push_back({std::move(tokens), cand.logprob, true});
                continue;
            }
            Beam nb;
            nb.tokens = std::move(tokens);
            nb.logprob = cand.logprob;
            nb.state = alive[cand.beam].state;
            if (t + 1 < limit) {
                nb.next = decoder_step(backbone, enc, nb.state, cand.token);
            }
            next_alive.push_back(std::move(nb));
        }
        alive = std::move(next_alive);
    }
    for (auto& b : alive) {
        finished.push_back({std::move(b.tokens), b.logprob, false});
    }
    return finished;
}

std::vector<int> decode_beam(const Backbone& backbone, const Mat* prompt, std::span<const int> inputs,
                             const DecodeConfig& cfg) {
    const auto cands = beam_candidates(backbone, prompt, inputs, cfg);
    const Hypothesis* best = nullptr;
    double best_score = 0.0;
    for (const auto& h : cands) {
        const double s = h.score(cfg.length_penalty_alpha);
        if (best == nullptr || s > best_score || (s == best_score && h.tokens < best->tokens)) {
            best = &h;
            best_score = s;
        }
    }
    std::vector<int> out = best->tokens;
    if (!out.empty() && out.back() == kEosId) {
        out.pop_back();
    }
    return out;
}

double sequence_logprob(const Backbone& backbone, const Mat* prompt, std::span<const int> inputs,
                        std::span<const int> tokens) {
    const EncodedInput enc = encode_input(backbone, prompt, inputs);
    DecoderState state;
    Eigen::VectorXd lp = decoder_step(backbone, enc, state, kPadId);
    double total = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        total += lp(tokens[i]);
        if (i + 1 < tokens.size()) {
            lp = decoder_step(backbone, enc, state, tokens[i]);
        }
    }
    return total;
}

} // namespace xgkit
