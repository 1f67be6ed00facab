#include "doctest.h"

#include "support/naive_transformer.hpp"

#include "xgkit/backbone.hpp"
#include "xgkit/errors.hpp"
#include "xgkit/transformer.hpp"

#include <cmath>

using namespace xgkit;

namespace {

BackboneConfig tiny_config() {
    BackboneConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_enc_layers = 1;
    c.n_dec_layers = 1;
    c.ffn_dim = 12;
    c.vocab_size = 11;
    c.max_len = 16;
    return c;
}

TaskExample example(TokenIds in, TokenIds out) {
    TaskExample ex;
    ex.inputs = std::move(in);
    ex.targets = std::move(out);
    return ex;
}

naive::Matrix to_rows(const Mat& m) {
    naive::Matrix out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    return out;
}

} // namespace

TEST_CASE("init is deterministic per seed and rejects bad head counts") {
    const auto a = Backbone::init(tiny_config(), 7);
    const auto b = Backbone::init(tiny_config(), 7);
    const auto c = Backbone::init(tiny_config(), 8);
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint() != c.fingerprint());
    for (const double v : a.parameters()) {
        REQUIRE(std::isfinite(v));
    }
    BackboneConfig bad = tiny_config();
    bad.d_model = 8;
    bad.n_heads = 3;
    CHECK_THROWS_AS(Backbone::init(bad, 1), ConfigError);
}

TEST_CASE("parameter count matches the closed form") {
    for (const bool tied : {true, false}) {
        BackboneConfig c;
        c.d_model = 16;
        c.n_heads = 4;
        c.n_enc_layers = 2;
        c.n_dec_layers = 3;
        c.ffn_dim = 40;
        c.vocab_size = 300;
        c.max_len = 50;
        c.tie_embeddings = tied;
        const std::size_t d = 16, f = 40, v = 300, len = 50;
        std::size_t expected = v * d + 2 * len * d;
        expected += 2 * (2 * d + 4 * d * d + 2 * d * f);
        expected += 3 * (3 * d + 8 * d * d + 2 * d * f);
        expected += 2 * d;
        if (!tied) {
            expected += v * d;
        }
        CHECK(c.parameter_count() == expected);
        CHECK(Backbone::init(c, 1).parameters().size() == expected);
    }
}

TEST_CASE("zeroed output projection gives ln(vocab)") {
    BackboneConfig c = tiny_config();
    c.vocab_size = 4;
    c.tie_embeddings = false;
    auto bb = Backbone::init(c, 3);
    auto params = bb.mutable_parameters();
    const std::size_t off = bb.layout().out_proj;
    std::fill(params.begin() + static_cast<std::ptrdiff_t>(off),
              params.begin() + static_cast<std::ptrdiff_t>(off + 4 * static_cast<std::size_t>(c.d_model)), 0.0);
    const double loss = forward_loss(bb, nullptr, example({3, 2, 3}, {2, 3}));
    CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-15));
}

TEST_CASE("no prompt equals an empty prompt exactly") {
    const auto bb = Backbone::init(tiny_config(), 5);
    const Prompt empty(Mat(0, 8));
    const auto ex = example({4, 5, 6, 7}, {8, 9});
    CHECK(forward_loss(bb, nullptr, ex) == forward_loss(bb, &empty, ex));
}

TEST_CASE("loss matches the loop-based reference") {
    BackboneConfig c;
    c.d_model = 4;
    c.n_heads = 2;
    c.n_enc_layers = 1;
    c.n_dec_layers = 1;
    c.ffn_dim = 6;
    c.vocab_size = 9;
    c.max_len = 8;
    for (const bool tied : {true, false}) {
        c.tie_embeddings = tied;
        const auto bb = Backbone::init(c, 11);
        Rng rng(2);
        const Prompt prompt = Prompt::random_uniform(3, 4, rng);
        const auto ex = example({3, 4, 5, 8, 3}, {6, 7, 3});
        CHECK(forward_loss(bb, &prompt, ex) == doctest::Approx(naive::loss(bb, to_rows(prompt.values()), ex)).epsilon(1e-12));
        CHECK(forward_loss(bb, nullptr, ex) == doctest::Approx(naive::loss(bb, {}, ex)).epsilon(1e-12));
        // empty encoder input, as in the LM task
        CHECK(forward_loss(bb, nullptr, example({}, {5, 6})) == doctest::Approx(naive::loss(bb, {}, example({}, {5, 6}))).epsilon(1e-12));
    }
}

TEST_CASE("deeper config also matches the reference") {
    BackboneConfig c = tiny_config();
    c.n_enc_layers = 2;
    c.n_dec_layers = 2;
    c.n_heads = 4;
    const auto bb = Backbone::init(c, 19);
    Rng rng(4);
    const Prompt prompt = Prompt::random_uniform(2, 8, rng);
    const auto ex = example({3, 4, 10, 9}, {6, 7, 7, 2});
    CHECK(forward_loss(bb, &prompt, ex) == doctest::Approx(naive::loss(bb, to_rows(prompt.values()), ex)).epsilon(1e-12));
}

TEST_CASE("inputs and targets are clipped to the position tables") {
    BackboneConfig c = tiny_config();
    c.max_len = 6;
    const auto bb = Backbone::init(c, 2);
    const auto long_ex = example({3, 4, 5, 6, 7, 8, 9, 10}, {3, 4, 5, 6, 7, 8, 9});
    const auto clipped = example({3, 4, 5, 6, 7, 8}, {3, 4, 5, 6, 7});
    CHECK(forward_loss(bb, nullptr, long_ex) == forward_loss(bb, nullptr, clipped));
}

TEST_CASE("out-of-range ids and mismatched prompts are rejected") {
    const auto bb = Backbone::init(tiny_config(), 2);
    CHECK_THROWS_AS(forward_loss(bb, nullptr, example({3, 11}, {4})), InputError);
    CHECK_THROWS_AS(forward_loss(bb, nullptr, example({3}, {-1})), InputError);
    const Prompt wrong(Mat::Zero(2, 5));
    CHECK_THROWS_AS(forward_loss(bb, &wrong, example({3}, {4})), InputError);
}

TEST_CASE("prompt gradient matches central differences") {
    BackboneConfig c = tiny_config();
    auto bb = Backbone::init(c, 9);
    bb.freeze();
    Rng rng(5);
    const Prompt prompt = Prompt::random_uniform(3, c.d_model, rng);
    const std::vector<TaskExample> batch = {example({3, 4, 5}, {6, 7}), example({8, 9, 10, 3}, {4}), example({}, {5, 6, 7})};
    const Mat g = prompt_grad(bb, prompt, batch);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        Prompt plus = prompt, minus = prompt;
        plus.values().data()[i] += 1e-5;
        minus.values().data()[i] -= 1e-5;
        const double fd = (batch_loss(bb, &plus, batch) - batch_loss(bb, &minus, batch)) / 2e-5;
        const double denom = std::max({std::abs(fd), std::abs(g.data()[i]), 1e-8});
        worst = std::max(worst, std::abs(fd - g.data()[i]) / denom);
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("parameter gradient matches central differences") {
    for (const bool tied : {true, false}) {
        BackboneConfig c = tiny_config();
        c.tie_embeddings = tied;
        Backbone bb = Backbone::init(c, 21);
        Rng rng(8);
        const Prompt prompt = Prompt::random_uniform(2, c.d_model, rng);
        const std::vector<TaskExample> batch = {example({3, 4, 5}, {6, 7}), example({9, 3}, {4, 4})};
        std::vector<double> grad(bb.parameters().size(), 0.0);
        batch_loss(bb, &prompt, batch, &grad, nullptr);
        double worst = 0.0;
        Rng pick(3);
        for (int probe = 0; probe < 200; ++probe) {
            const auto i = static_cast<std::size_t>(pick.below(grad.size()));
            auto params = bb.mutable_parameters();
            const double keep = params[i];
            params[i] = keep + 1e-5;
            const double up = batch_loss(bb, &prompt, batch);
            params[i] = keep - 1e-5;
            const double down = batch_loss(bb, &prompt, batch);
            params[i] = keep;
            const double fd = (up - down) / 2e-5;
            if (std::abs(fd) < 1e-7 && std::abs(grad[i]) < 1e-7) {
                continue; // unused row of a table
            }
            worst = std::max(worst, std::abs(fd - grad[i]) / std::max(std::abs(fd), std::abs(grad[i])));
        }
        CHECK(worst <= 1e-5);
    }
}

TEST_CASE("prompt_grad contracts") {
    auto bb = Backbone::init(tiny_config(), 9);
    Rng rng(1);
    const Prompt prompt = Prompt::random_uniform(2, 8, rng);
    const std::vector<TaskExample> batch = {example({3, 4}, {5})};
    CHECK_THROWS_AS(prompt_grad(bb, prompt, batch), InvariantError);
    bb.freeze();
    CHECK_THROWS_AS(prompt_grad(bb, prompt, std::vector<TaskExample>{}), InputError);
    const std::vector<TaskExample> doubled = {batch[0], batch[0]};
    CHECK(prompt_grad(bb, prompt, doubled) == prompt_grad(bb, prompt, batch));
}

TEST_CASE("incremental decoding agrees with teacher forcing") {
    const auto bb = Backbone::init(tiny_config(), 13);
    Rng rng(3);
    const Prompt prompt = Prompt::random_uniform(2, 8, rng);
    const TokenIds in = {3, 5, 7, 9};
    const TokenIds out = {4, 6, 8};
    TokenIds with_eos = out;
    with_eos.push_back(kEosId);
    const double loss = forward_loss(bb, &prompt, example(in, out));
    const EncodedInput enc = encode_input(bb, &prompt.values(), in);
    DecoderState st;
    double lp = 0.0;
    int prev = kPadId;
    for (const int t : with_eos) {
        lp += decoder_step(bb, enc, st, prev)(t);
        prev = t;
    }
    CHECK(-lp / 4.0 == doctest::Approx(loss).epsilon(1e-12));
}

TEST_CASE("compose and swap") {
    Rng rng(4);
    const Prompt l1 = Prompt::random_uniform(50, 6, rng);
    const Prompt l2 = Prompt::random_uniform(50, 6, rng);
    const Prompt t = Prompt::random_uniform(50, 6, rng);
    const FactorizedPrompt f{l1, t};
    const Prompt full = compose_prompt(f);
    CHECK(full.length() == 100);
    CHECK(full.values().topRows(50) == l1.values());
    CHECK(full.values().bottomRows(50) == t.values());
    const FactorizedPrompt swapped = swap_language(f, l2);
    CHECK(swapped.task_half.fingerprint() == t.fingerprint());
    const Prompt full2 = compose_prompt(swapped);
    CHECK(full2.values().bottomRows(50) == full.values().bottomRows(50));
    CHECK(full2.values().topRows(50) != full.values().topRows(50));
    const FactorizedPrompt back = swap_language(swapped, l1);
    CHECK(compose_prompt(back) == full);
    CHECK_THROWS_AS(swap_language(f, Prompt::random_uniform(49, 6, rng)), InputError);
    CHECK_THROWS_AS(compose_prompt({l1, Prompt::random_uniform(50, 5, rng)}), InputError);
}

TEST_CASE("vocab-sampled prompts copy embedding rows") {
    const auto bb = Backbone::init(tiny_config(), 13);
    Rng rng(1);
    for (const int ell : {1, 10, 100, 1000}) {
        const Prompt p = Prompt::sample_vocab(bb, ell, rng, 3);
        CHECK(p.length() == ell);
        const auto emb = bb.matrix(bb.layout().tok_emb, 11, 8);
        for (int r = 0; r < std::min(ell, 5); ++r) {
            bool found = false;
            for (int id = 3; id < 11; ++id) {
                found = found || emb.row(id) == p.values().row(r);
            }
            CHECK(found);
        }
    }
}
