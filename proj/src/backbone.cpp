#include "xgkit/backbone.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/hash.hpp"

#include "json.hpp"

#include <cmath>

namespace xgkit {

using nlohmann::json;

void BackboneConfig::validate() const {
    if (d_model <= 0 || n_heads <= 0 || n_enc_layers < 0 || n_dec_layers < 0 || ffn_dim <= 0 || vocab_size <= 0 ||
        max_len <= 0) {
        throw ConfigError("backbone dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
    }
}

std::size_t BackboneConfig::parameter_count() const {
    return ParamLayout::build(*this).total;
}

std::string BackboneConfig::to_json() const {
    nlohmann::ordered_json j = {{"d_model", d_model},           {"n_heads", n_heads},       {"n_enc_layers", n_enc_layers},
                                {"n_dec_layers", n_dec_layers}, {"ffn_dim", ffn_dim},       {"vocab_size", vocab_size},
                                {"max_len", max_len},           {"tie_embeddings", tie_embeddings}};
    return j.dump();
}

BackboneConfig BackboneConfig::from_json(const std::string& text) {
    BackboneConfig c;
    try {
        const json j = json::parse(text);
        c.d_model = j.at("d_model").get<int>();
        c.n_heads = j.at("n_heads").get<int>();
        c.n_enc_layers = j.at("n_enc_layers").get<int>();
        c.n_dec_layers = j.at("n_dec_layers").get<int>();
        c.ffn_dim = j.at("ffn_dim").get<int>();
        c.vocab_size = j.at("vocab_size").get<int>();
        c.max_len = j.at("max_len").get<int>();
        c.tie_embeddings = j.value("tie_embeddings", true);
    } catch (const json::exception& e) {
        throw FormatError(std::string("backbone config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string BackboneConfig::hash() const {
    return hash_bytes(to_json());
}

ParamLayout ParamLayout::build(const BackboneConfig& cfg) {
    cfg.validate();
    ParamLayout l;
    const int d = cfg.d_model;
    auto add = [&l](const std::string& name, int rows, int cols) {
        ParamInfo info{name, rows, cols, l.total};
        l.total += info.size();
        l.entries.push_back(info);
        return info.offset;
    };
    l.tok_emb = add("tok_emb", cfg.vocab_size, d);
    l.enc_pos = add("enc_pos", cfg.max_len, d);
    l.dec_pos = add("dec_pos", cfg.max_len, d);
    auto add_attn = [&](const std::string& p) {
        AttentionParams a;
        a.wq = add(p + ".wq", d, d);
        a.wk = add(p + ".wk", d, d);
        a.wv = add(p + ".wv", d, d);
        a.wo = add(p + ".wo", d, d);
        return a;
    };
    for (int i = 0; i < cfg.n_enc_layers; ++i) {
        const std::string p = "enc" + std::to_string(i);
        EncoderLayerParams e;
        e.norm1 = add(p + ".norm1", 1, d);
        e.self = add_attn(p + ".self");
        e.norm2 = add(p + ".norm2", 1, d);
        e.ffn_in = add(p + ".ffn_in", d, cfg.ffn_dim);
        e.ffn_out = add(p + ".ffn_out", cfg.ffn_dim, d);
        l.enc.push_back(e);
    }
    for (int i = 0; i < cfg.n_dec_layers; ++i) {
        const std::string p = "dec" + std::to_string(i);
        DecoderLayerParams e;
        e.norm1 = add(p + ".norm1", 1, d);
        e.self = add_attn(p + ".self");
        e.norm2 = add(p + ".norm2", 1, d);
        e.cross = add_attn(p + ".cross");
        e.norm3 = add(p + ".norm3", 1, d);
        e.ffn_in = add(p + ".ffn_in", d, cfg.ffn_dim);
        e.ffn_out = add(p + ".ffn_out", cfg.ffn_dim, d);
        l.dec.push_back(e);
    }
    l.enc_norm = add("enc_norm", 1, d);
    l.dec_norm = add("dec_norm", 1, d);
    l.out_proj = cfg.tie_embeddings ? l.tok_emb : add("out_proj", cfg.vocab_size, d);
    return l;
}

Backbone::Backbone(BackboneConfig config, std::vector<double> params)
    : config_(config), layout_(ParamLayout::build(config)), params_(std::move(params)) {
    if (params_.size() != layout_.total) {
        throw FormatError("backbone expects " + std::to_string(layout_.total) + " parameters, got " +
                          std::to_string(params_.size()));
    }
}

Backbone Backbone::init(const BackboneConfig& config, std::uint64_t seed) {
    const ParamLayout layout = ParamLayout::build(config);
    std::vector<double> params(layout.total, 0.0);
    Rng rng(seed);
    for (const auto& e : layout.entries) {
        const bool is_norm = e.rows == 1 && e.name.find("norm") != std::string::npos;
        const bool is_table = e.name == "tok_emb" || e.name == "enc_pos" || e.name == "dec_pos" || e.name == "out_proj";
        const double bound = is_table ? 0.5 : 1.0 / std::sqrt(static_cast<double>(e.rows));
        for (std::size_t i = 0; i < e.size(); ++i) {
            params[e.offset + i] = is_norm ? 1.0 : rng.uniform(-bound, bound);
        }
    }
    return Backbone(config, std::move(params));
}

std::span<double> Backbone::mutable_parameters() {
    if (frozen_) {
        throw InvariantError("attempt to modify a frozen backbone");
    }
    return params_;
}

std::string Backbone::fingerprint() const {
    Fnv1a h;
    h.update(std::span<const double>(params_));
    return h.hex();
}

ConstMatMap Backbone::output_projection() const {
    return matrix(layout_.out_proj, config_.vocab_size, config_.d_model);
}

Prompt::Prompt(Mat values) : values_(std::move(values)) {}

std::string Prompt::fingerprint() const {
    Fnv1a h;
    h.update(std::span<const double>(values_.data(), static_cast<std::size_t>(values_.size())));
    return h.hex();
}

Prompt Prompt::sample_vocab(const Backbone& backbone, int length, Rng& rng, int lo, int hi) {
    const auto& cfg = backbone.config();
    if (hi < 0) {
        hi = cfg.vocab_size;
    }
    if (length < 1 || lo < 0 || hi > cfg.vocab_size || lo >= hi) {
        throw ConfigError("invalid prompt length or vocabulary range for sampling");
    }
    const auto emb = backbone.matrix(backbone.layout().tok_emb, cfg.vocab_size, cfg.d_model);
    Mat values(length, cfg.d_model);
    for (int r = 0; r < length; ++r) {
        const auto id = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo)));
        values.row(r) = emb.row(id);
    }
    return Prompt(std::move(values));
}

Prompt Prompt::random_uniform(int length, int d_model, Rng& rng, double scale) {
    if (length < 1 || d_model < 1) {
        throw ConfigError("prompt shape must be positive");
    }
    Mat values(length, d_model);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        values.data()[i] = rng.uniform(-scale, scale);
    }
    return Prompt(std::move(values));
}

Prompt compose_prompt(const FactorizedPrompt& f) {
    if (f.language_half.d_model() != f.task_half.d_model()) {
        throw InputError("sub-prompt widths differ");
    }
    Mat v(f.language_half.length() + f.task_half.length(), f.language_half.d_model());
    v.topRows(f.language_half.length()) = f.language_half.values();
    v.bottomRows(f.task_half.length()) = f.task_half.values();
    return Prompt(std::move(v));
}

FactorizedPrompt swap_language(const FactorizedPrompt& f, const Prompt& target_half) {
    if (target_half.length() != f.language_half.length() || target_half.d_model() != f.language_half.d_model()) {
        throw InputError("replacement language sub-prompt has a different shape");
    }
    return FactorizedPrompt{target_half, f.task_half};
}

} // namespace xgkit
