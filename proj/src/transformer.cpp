#include "xgkit/transformer.hpp"

#include "xgkit/corpus.hpp"
#include "xgkit/errors.hpp"
#include "xgkit/tokenizer.hpp"

#include <algorithm>
#include <cmath>

namespace xgkit {

namespace {

constexpr double kNormEps = 1e-6;

using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Ctx {
    const BackboneConfig& cfg;
    const ParamLayout& layout;
    const double* p;
    double* g; // null when weight gradients are not wanted
    int d, heads, dh, ffn, vocab;
    double logit_scale;

    Ctx(const Backbone& bb, double* grad)
        : cfg(bb.config()), layout(bb.layout()), p(bb.data()), g(grad), d(cfg.d_model), heads(cfg.n_heads),
          dh(cfg.d_model / cfg.n_heads), ffn(cfg.ffn_dim), vocab(cfg.vocab_size),
          logit_scale(1.0 / std::sqrt(static_cast<double>(cfg.d_model))) {}

    ConstMatMap w(std::size_t off, int rows, int cols) const { return ConstMatMap(p + off, rows, cols); }
    ConstMatMap sq(std::size_t off) const { return w(off, d, d); }
    MatMap gw(std::size_t off, int rows, int cols) const { return MatMap(g + off, rows, cols); }
    MatMap gsq(std::size_t off) const { return gw(off, d, d); }
};

struct NormCache {
    Mat xhat;
    Eigen::VectorXd inv;
};

Mat norm_forward(const Ctx& c, std::size_t gain_off, const Mat& x, NormCache& cache) {
    const auto rows = x.rows();
    cache.inv.resize(rows);
    cache.xhat.resize(rows, c.d);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double ms = x.row(r).squaredNorm() / c.d;
        cache.inv(r) = 1.0 / std::sqrt(ms + kNormEps);
        cache.xhat.row(r) = x.row(r) * cache.inv(r);
    }
    const auto gain = c.w(gain_off, 1, c.d);
    return cache.xhat.array().rowwise() * gain.row(0).array();
}

void norm_backward(const Ctx& c, std::size_t gain_off, const NormCache& cache, const Mat& dy, Mat& dx) {
    const auto gain = c.w(gain_off, 1, c.d);
    const Mat dxh = dy.array().rowwise() * gain.row(0).array();
    if (c.g != nullptr) {
        c.gw(gain_off, 1, c.d).row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    }
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double m = dxh.row(r).dot(cache.xhat.row(r)) / c.d;
        dx.row(r) += cache.inv(r) * (dxh.row(r) - m * cache.xhat.row(r));
    }
}

void softmax_rows(Mat& s, bool causal) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const Eigen::Index valid = causal ? i + 1 : s.cols();
        auto row = s.row(i).head(valid);
        const double mx = row.maxCoeff();
        row = (row.array() - mx).exp().matrix();
        row /= row.sum();
        if (valid < s.cols()) {
            s.row(i).tail(s.cols() - valid).setZero();
        }
    }
}

struct AttnCache {
    Mat q, k, v, concat;
    std::vector<Mat> probs;
};

Mat attn_forward(const Ctx& c, const AttentionParams& a, const Mat& xq, const Mat& xkv, bool causal,
                 AttnCache& cache) {
    const auto tq = xq.rows();
    const auto tk = xkv.rows();
    if (tk == 0) {
        cache.concat = Mat::Zero(tq, c.d);
        return Mat::Zero(tq, c.d);
    }
    cache.q.noalias() = xq * c.sq(a.wq);
    cache.k.noalias() = xkv * c.sq(a.wk);
    cache.v.noalias() = xkv * c.sq(a.wv);
    cache.concat.resize(tq, c.d);
    cache.probs.resize(static_cast<std::size_t>(c.heads));
    const double scale = 1.0 / std::sqrt(static_cast<double>(c.dh));
    for (int h = 0; h < c.heads; ++h) {
        Mat& prob = cache.probs[static_cast<std::size_t>(h)];
        prob.noalias() = cache.q.middleCols(h * c.dh, c.dh) * cache.k.middleCols(h * c.dh, c.dh).transpose();
        prob *= scale;
        softmax_rows(prob, causal);
        cache.concat.middleCols(h * c.dh, c.dh).noalias() = prob * cache.v.middleCols(h * c.dh, c.dh);
    }
    Mat out;
    out.noalias() = cache.concat * c.sq(a.wo);
    return out;
}

void attn_backward(const Ctx& c, const AttentionParams& a, const Mat& xq, const Mat& xkv, const AttnCache& cache,
                   const Mat& dout, Mat& dxq, Mat& dxkv) {
    if (xkv.rows() == 0) {
        return;
    }
    if (c.g != nullptr) {
        c.gsq(a.wo).noalias() += cache.concat.transpose() * dout;
    }
    Mat dconcat;
    dconcat.noalias() = dout * c.sq(a.wo).transpose();
    Mat dq(xq.rows(), c.d);
    Mat dk(xkv.rows(), c.d);
    Mat dv(xkv.rows(), c.d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(c.dh));
    for (int h = 0; h < c.heads; ++h) {
        const Mat& prob = cache.probs[static_cast<std::size_t>(h)];
        const auto dch = dconcat.middleCols(h * c.dh, c.dh);
        Mat dp;
        dp.noalias() = dch * cache.v.middleCols(h * c.dh, c.dh).transpose();
        dv.middleCols(h * c.dh, c.dh).noalias() = prob.transpose() * dch;
        const Eigen::VectorXd dot = (dp.array() * prob.array()).rowwise().sum();
        Mat ds = prob.array() * (dp.colwise() - dot).array();
        ds *= scale;
        dq.middleCols(h * c.dh, c.dh).noalias() = ds * cache.k.middleCols(h * c.dh, c.dh);
        dk.middleCols(h * c.dh, c.dh).noalias() = ds.transpose() * cache.q.middleCols(h * c.dh, c.dh);
    }
    if (c.g != nullptr) {
        c.gsq(a.wq).noalias() += xq.transpose() * dq;
        c.gsq(a.wk).noalias() += xkv.transpose() * dk;
        c.gsq(a.wv).noalias() += xkv.transpose() * dv;
    }
    dxq.noalias() += dq * c.sq(a.wq).transpose();
    dxkv.noalias() += dk * c.sq(a.wk).transpose();
    dxkv.noalias() += dv * c.sq(a.wv).transpose();
}

struct FfnCache {
    Mat pre, act;
};

Mat ffn_forward(const Ctx& c, std::size_t in_off, std::size_t out_off, const Mat& x, FfnCache& cache) {
    cache.pre.noalias() = x * c.w(in_off, c.d, c.ffn);
    cache.act = cache.pre.cwiseMax(0.0);
    Mat out;
    out.noalias() = cache.act * c.w(out_off, c.ffn, c.d);
    return out;
}

void ffn_backward(const Ctx& c, std::size_t in_off, std::size_t out_off, const Mat& x, const FfnCache& cache,
                  const Mat& dout, Mat& dx) {
    if (c.g != nullptr) {
        c.gw(out_off, c.ffn, c.d).noalias() += cache.act.transpose() * dout;
    }
    Mat dpre;
    dpre.noalias() = dout * c.w(out_off, c.ffn, c.d).transpose();
    dpre = (cache.pre.array() > 0.0).select(dpre, 0.0);
    if (c.g != nullptr) {
        c.gw(in_off, c.d, c.ffn).noalias() += x.transpose() * dpre;
    }
    dx.noalias() += dpre * c.w(in_off, c.d, c.ffn).transpose();
}

struct EncLayerCache {
    NormCache n1, n2;
    Mat a, b;
    AttnCache attn;
    FfnCache ff;
};

struct DecLayerCache {
    NormCache n1, n2, n3;
    Mat a, b, e;
    AttnCache self, cross;
    FfnCache ff;
};

struct EncoderCache {
    std::vector<EncLayerCache> layers;
    NormCache final_norm;
    int prompt_rows = 0;
    std::vector<int> ids;
};

Mat encoder_forward(const Ctx& c, const Mat* prompt, std::span<const int> ids, EncoderCache& cache) {
    const int ell = prompt != nullptr ? static_cast<int>(prompt->rows()) : 0;
    const int n = static_cast<int>(ids.size());
    cache.prompt_rows = ell;
    cache.ids.assign(ids.begin(), ids.end());
    Mat x(ell + n, c.d);
    if (ell > 0) {
        x.topRows(ell) = *prompt;
    }
    const auto emb = c.w(c.layout.tok_emb, c.vocab, c.d);
    const auto pos = c.w(c.layout.enc_pos, c.cfg.max_len, c.d);
    for (int i = 0; i < n; ++i) {
        x.row(ell + i) = emb.row(ids[static_cast<std::size_t>(i)]) + pos.row(i);
    }
    cache.layers.resize(c.layout.enc.size());
    for (std::size_t l = 0; l < c.layout.enc.size(); ++l) {
        const auto& lp = c.layout.enc[l];
        auto& lc = cache.layers[l];
        lc.a = norm_forward(c, lp.norm1, x, lc.n1);
        x += attn_forward(c, lp.self, lc.a, lc.a, false, lc.attn);
        lc.b = norm_forward(c, lp.norm2, x, lc.n2);
        x += ffn_forward(c, lp.ffn_in, lp.ffn_out, lc.b, lc.ff);
    }
    return norm_forward(c, c.layout.enc_norm, x, cache.final_norm);
}

void encoder_backward(const Ctx& c, const EncoderCache& cache, const Mat& dmem, Mat* dprompt) {
    Mat dx = Mat::Zero(dmem.rows(), c.d);
    norm_backward(c, c.layout.enc_norm, cache.final_norm, dmem, dx);
    for (std::size_t l = c.layout.enc.size(); l-- > 0;) {
        const auto& lp = c.layout.enc[l];
        const auto& lc = cache.layers[l];
        Mat db = Mat::Zero(dx.rows(), c.d);
        ffn_backward(c, lp.ffn_in, lp.ffn_out, lc.b, lc.ff, dx, db);
        norm_backward(c, lp.norm2, lc.n2, db, dx);
        Mat da = Mat::Zero(dx.rows(), c.d);
        attn_backward(c, lp.self, lc.a, lc.a, lc.attn, dx, da, da);
        norm_backward(c, lp.norm1, lc.n1, da, dx);
    }
    const int ell = cache.prompt_rows;
    if (dprompt != nullptr && ell > 0) {
        dprompt->topRows(ell) += dx.topRows(ell);
    }
    if (c.g != nullptr) {
        auto gemb = c.gw(c.layout.tok_emb, c.vocab, c.d);
        auto gpos = c.gw(c.layout.enc_pos, c.cfg.max_len, c.d);
        for (std::size_t i = 0; i < cache.ids.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(ell + static_cast<int>(i));
            gemb.row(cache.ids[i]) += dx.row(r);
            gpos.row(static_cast<Eigen::Index>(i)) += dx.row(r);
        }
    }
}

void check_ids(std::span<const int> ids, int vocab, const char* what) {
    for (const int id : ids) {
        if (id < 0 || id >= vocab) {
            throw InputError(std::string(what) + " token id " + std::to_string(id) + " outside [0, " +
                             std::to_string(vocab) + ")");
        }
    }
}

void check_prompt(const Ctx& c, const Mat* prompt) {
    if (prompt != nullptr && prompt->rows() > 0 && prompt->cols() != c.d) {
        throw InputError("prompt width " + std::to_string(prompt->cols()) + " does not match d_model " +
                         std::to_string(c.d));
    }
}

} // namespace

int max_input_tokens(const BackboneConfig& cfg) {
    return std::min(kDefaultMaxInputTokens, cfg.max_len);
}

int max_target_tokens(const BackboneConfig& cfg) {
    return std::min(kDefaultMaxTargetTokens, cfg.max_len - 1);
}

double example_loss(const Backbone& backbone, const Mat* prompt, const TaskExample& ex, const GradSink* sink) {
    double* g = nullptr;
    if (sink != nullptr && sink->params != nullptr) {
        if (sink->params->size() != backbone.parameters().size()) {
            throw InvariantError("parameter gradient buffer has the wrong size");
        }
        g = sink->params->data();
    }
    const Ctx c(backbone, g);
    check_prompt(c, prompt);
    if (prompt != nullptr && prompt->rows() == 0) {
        prompt = nullptr;
    }
    const auto n_in = std::min<std::size_t>(ex.inputs.size(), static_cast<std::size_t>(max_input_tokens(c.cfg)));
    const auto n_tgt = std::min<std::size_t>(ex.targets.size(), static_cast<std::size_t>(max_target_tokens(c.cfg)));
    const std::span<const int> inputs(ex.inputs.data(), n_in);
    check_ids(inputs, c.vocab, "input");
    std::vector<int> targets(ex.targets.begin(), ex.targets.begin() + static_cast<std::ptrdiff_t>(n_tgt));
    targets.push_back(kEosId);
    check_ids(targets, c.vocab, "target");
    const int m = static_cast<int>(targets.size());

    EncoderCache enc_cache;
    const Mat memory = encoder_forward(c, prompt, inputs, enc_cache);

    // Decoder input: PAD then the targets shifted right.
    std::vector<int> dec_in(static_cast<std::size_t>(m));
    dec_in[0] = kPadId;
    std::copy(targets.begin(), targets.end() - 1, dec_in.begin() + 1);
    const auto emb = c.w(c.layout.tok_emb, c.vocab, c.d);
    const auto pos = c.w(c.layout.dec_pos, c.cfg.max_len, c.d);
    Mat x(m, c.d);
    for (int i = 0; i < m; ++i) {
        x.row(i) = emb.row(dec_in[static_cast<std::size_t>(i)]) + pos.row(i);
    }
    std::vector<DecLayerCache> caches(c.layout.dec.size());
    for (std::size_t l = 0; l < c.layout.dec.size(); ++l) {
        const auto& lp = c.layout.dec[l];
        auto& lc = caches[l];
        lc.a = norm_forward(c, lp.norm1, x, lc.n1);
        x += attn_forward(c, lp.self, lc.a, lc.a, true, lc.self);
        lc.b = norm_forward(c, lp.norm2, x, lc.n2);
        x += attn_forward(c, lp.cross, lc.b, memory, false, lc.cross);
        lc.e = norm_forward(c, lp.norm3, x, lc.n3);
        x += ffn_forward(c, lp.ffn_in, lp.ffn_out, lc.e, lc.ff);
    }
    NormCache final_cache;
    const Mat z = norm_forward(c, c.layout.dec_norm, x, final_cache);
    const auto out = c.w(c.layout.out_proj, c.vocab, c.d);
    Mat logits;
    logits.noalias() = z * out.transpose();
    logits *= c.logit_scale;

    double loss = 0.0;
    Mat probs(m, c.vocab);
    for (int i = 0; i < m; ++i) {
        const double mx = logits.row(i).maxCoeff();
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        loss -= logits(i, targets[static_cast<std::size_t>(i)]) - lse;
        probs.row(i) = (logits.row(i).array() - lse).exp();
    }
    loss /= m;

    if (sink == nullptr || (sink->params == nullptr && sink->prompt == nullptr)) {
        return loss;
    }
    if (sink->prompt != nullptr && prompt != nullptr &&
        (sink->prompt->rows() != prompt->rows() || sink->prompt->cols() != prompt->cols())) {
        throw InvariantError("prompt gradient buffer has the wrong shape");
    }

    Mat dlogits = probs;
    for (int i = 0; i < m; ++i) {
        dlogits(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
    }
    dlogits *= sink->scale / m;
    Mat dz;
    dz.noalias() = dlogits * out;
    dz *= c.logit_scale;
    if (g != nullptr) {
        c.gw(c.layout.out_proj, c.vocab, c.d).noalias() += c.logit_scale * (dlogits.transpose() * z);
    }
    Mat dx = Mat::Zero(m, c.d);
    norm_backward(c, c.layout.dec_norm, final_cache, dz, dx);
    Mat dmem = Mat::Zero(memory.rows(), c.d);
    for (std::size_t l = c.layout.dec.size(); l-- > 0;) {
        const auto& lp = c.layout.dec[l];
        const auto& lc = caches[l];
        Mat de = Mat::Zero(m, c.d);
        ffn_backward(c, lp.ffn_in, lp.ffn_out, lc.e, lc.ff, dx, de);
        norm_backward(c, lp.norm3, lc.n3, de, dx);
        Mat db = Mat::Zero(m, c.d);
        attn_backward(c, lp.cross, lc.b, memory, lc.cross, dx, db, dmem);
        norm_backward(c, lp.norm2, lc.n2, db, dx);
        Mat da = Mat::Zero(m, c.d);
        attn_backward(c, lp.self, lc.a, lc.a, lc.self, dx, da, da);
        norm_backward(c, lp.norm1, lc.n1, da, dx);
    }
    if (g != nullptr) {
        auto gemb = c.gw(c.layout.tok_emb, c.vocab, c.d);
        auto gpos = c.gw(c.layout.dec_pos, c.cfg.max_len, c.d);
        for (int i = 0; i < m; ++i) {
            gemb.row(dec_in[static_cast<std::size_t>(i)]) += dx.row(i);
            gpos.row(i) += dx.row(i);
        }
    }
    if (memory.rows() > 0) {
        encoder_backward(c, enc_cache, dmem, prompt != nullptr ? sink->prompt : nullptr);
    }
    return loss;
}

double forward_loss(const Backbone& backbone, const Prompt* prompt, const TaskExample& ex) {
    return example_loss(backbone, prompt != nullptr ? &prompt->values() : nullptr, ex);
}

double batch_loss(const Backbone& backbone, const Prompt* prompt, std::span<const TaskExample> batch,
                  std::vector<double>* param_grad, Mat* prompt_grad_out) {
    if (batch.empty()) {
        throw InputError("empty batch has no loss");
    }
    const Mat* p = prompt != nullptr ? &prompt->values() : nullptr;
    GradSink sink{param_grad, prompt_grad_out, 1.0 / static_cast<double>(batch.size())};
    const bool want = param_grad != nullptr || prompt_grad_out != nullptr;
    double total = 0.0;
    for (const auto& ex : batch) {
        total += example_loss(backbone, p, ex, want ? &sink : nullptr);
    }
    return total / static_cast<double>(batch.size());
}

Mat prompt_grad(const Backbone& backbone, const Prompt& prompt, std::span<const TaskExample> batch) {
    if (!backbone.frozen()) {
        throw InvariantError("prompt_grad requires a frozen backbone");
    }
    Mat grad = Mat::Zero(prompt.length(), prompt.d_model());
    batch_loss(backbone, &prompt, batch, nullptr, &grad);
    return grad;
}

EncodedInput encode_input(const Backbone& backbone, const Mat* prompt, std::span<const int> inputs) {
    const Ctx c(backbone, nullptr);
    check_prompt(c, prompt);
    if (prompt != nullptr && prompt->rows() == 0) {
        prompt = nullptr;
    }
    const auto n = std::min<std::size_t>(inputs.size(), static_cast<std::size_t>(max_input_tokens(c.cfg)));
    const auto clipped = inputs.first(n);
    check_ids(clipped, c.vocab, "input");
    EncoderCache cache;
    EncodedInput enc;
    enc.memory = encoder_forward(c, prompt, clipped, cache);
    for (const auto& lp : c.layout.dec) {
        Mat k;
        Mat v;
        k.noalias() = enc.memory * c.sq(lp.cross.wk);
        v.noalias() = enc.memory * c.sq(lp.cross.wv);
        enc.cross_k.push_back(std::move(k));
        enc.cross_v.push_back(std::move(v));
    }
    return enc;
}

namespace {

RowVec attend_one(const Ctx& c, const RowVec& q, const Mat& k, const Mat& v) {
    RowVec out = RowVec::Zero(c.d);
    if (k.rows() == 0) {
        return out;
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(c.dh));
    for (int h = 0; h < c.heads; ++h) {
        RowVec s = (q.middleCols(h * c.dh, c.dh) * k.middleCols(h * c.dh, c.dh).transpose()) * scale;
        const double mx = s.maxCoeff();
        s = (s.array() - mx).exp().matrix();
        s /= s.sum();
        out.middleCols(h * c.dh, c.dh) = s * v.middleCols(h * c.dh, c.dh);
    }
    return out;
}

RowVec norm_row(const Ctx& c, std::size_t gain_off, const RowVec& x) {
    const double inv = 1.0 / std::sqrt(x.squaredNorm() / c.d + kNormEps);
    return (x * inv).array() * c.w(gain_off, 1, c.d).row(0).array();
}

void append_row(Mat& m, const RowVec& r) {
    m.conservativeResize(m.rows() + 1, r.cols());
    m.row(m.rows() - 1) = r;
}

} // namespace

Eigen::VectorXd decoder_step(const Backbone& backbone, const EncodedInput& enc, DecoderState& state, int token) {
    const Ctx c(backbone, nullptr);
    if (token < 0 || token >= c.vocab) {
        throw InputError("decoder token id " + std::to_string(token) + " out of range");
    }
    if (state.position >= c.cfg.max_len) {
        throw InputError("decoder ran past max_len " + std::to_string(c.cfg.max_len));
    }
    const auto n_layers = c.layout.dec.size();
    if (state.self_k.size() != n_layers) {
        state.self_k.assign(n_layers, Mat(0, c.d));
        state.self_v.assign(n_layers, Mat(0, c.d));
    }
    RowVec x = c.w(c.layout.tok_emb, c.vocab, c.d).row(token) + c.w(c.layout.dec_pos, c.cfg.max_len, c.d).row(state.position);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& lp = c.layout.dec[l];
        const RowVec a = norm_row(c, lp.norm1, x);
        append_row(state.self_k[l], a * c.sq(lp.self.wk));
        append_row(state.self_v[l], a * c.sq(lp.self.wv));
        const RowVec q = a * c.sq(lp.self.wq);
        x += attend_one(c, q, state.self_k[l], state.self_v[l]) * c.sq(lp.self.wo);
        const RowVec b = norm_row(c, lp.norm2, x);
        if (enc.cross_k[l].rows() > 0) {
            const RowVec qc = b * c.sq(lp.cross.wq);
            x += attend_one(c, qc, enc.cross_k[l], enc.cross_v[l]) * c.sq(lp.cross.wo);
        }
        const RowVec e = norm_row(c, lp.norm3, x);
        const RowVec h = (e * c.w(lp.ffn_in, c.d, c.ffn)).cwiseMax(0.0);
        x += h * c.w(lp.ffn_out, c.ffn, c.d);
    }
    const RowVec z = norm_row(c, c.layout.dec_norm, x);
    Eigen::VectorXd logits = (c.w(c.layout.out_proj, c.vocab, c.d) * z.transpose()) * c.logit_scale;
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    ++state.position;
    return logits.array() - lse;
}

} // namespace xgkit
