// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "kpalign/common.hpp"
#include "kpalign/linalg.hpp"
#include "kpalign/text.hpp"

namespace kpalign {

struct CrossEncoderConfig {
    int layers = 2;
    int hidden = 128;
    int heads = 2;
    int ffn_dim = 512;
    int max_seq_len = 64;
    int vocab_size = 0;
    uint64_t seed = 1;
    std::string preset = "custom";

    static CrossEncoderConfig tiny(int vocab_size, int max_seq_len = 64, uint64_t seed = 1) {
        return CrossEncoderConfig{2, 128, 2, 512, max_seq_len, vocab_size, seed, "tiny"};
    }

    static CrossEncoderConfig mini(int vocab_size, int max_seq_len = 64, uint64_t seed = 1) {
        return CrossEncoderConfig{4, 256, 4, 1024, max_seq_len, vocab_size, seed, "mini"};
    }

    void validate() const {
        if (layers < 1) throw ConfigError("cross-encoder: layers must be >= 1");
        if (hidden < 1 || heads < 1 || hidden % heads != 0)
            throw ConfigError("cross-encoder: hidden must be a positive multiple of heads");
        if (ffn_dim < 1) throw ConfigError("cross-encoder: ffn_dim must be >= 1");
        if (max_seq_len < 1) throw ConfigError("cross-encoder: max_seq_len must be >= 1");
        if (vocab_size < 4) throw ConfigError("cross-encoder: vocab_size must be >= 4");
    }
};

// Offsets of each tensor inside the flat parameter vector.
struct CrossParamLayout {
    struct Layer {
        size_t ln1_g, ln1_b;
        size_t wq, bq, wk, bk, wv, bv, wo, bo;
        size_t ln2_g, ln2_b;
        size_t w1, b1, w2, b2;
    };

    size_t tok_emb = 0;
    size_t pos_emb = 0;
    std::vector<Layer> layers;
    size_t head_w = 0;
    size_t head_b = 0;
    size_t total = 0;

    static CrossParamLayout make(const CrossEncoderConfig& cfg) {
        const size_t h = static_cast<size_t>(cfg.hidden);
        const size_t f = static_cast<size_t>(cfg.ffn_dim);
        CrossParamLayout lay;
        size_t off = 0;
        auto take = [&off](size_t n) { const size_t at = off; off += n; return at; };
        lay.tok_emb = take(static_cast<size_t>(cfg.vocab_size) * h);
        lay.pos_emb = take(static_cast<size_t>(cfg.max_seq_len) * h);
        lay.layers.resize(static_cast<size_t>(cfg.layers));
        for (auto& l : lay.layers) {
            l.ln1_g = take(h); l.ln1_b = take(h);
            l.wq = take(h * h); l.bq = take(h);
            l.wk = take(h * h); l.bk = take(h);
            l.wv = take(h * h); l.bv = take(h);
            l.wo = take(h * h); l.bo = take(h);
            l.ln2_g = take(h); l.ln2_b = take(h);
            l.w1 = take(h * f); l.b1 = take(f);
            l.w2 = take(f * h); l.b2 = take(h);
        }
        lay.head_w = take(h);
        lay.head_b = take(1);
        lay.total = off;
        return lay;
    }
};

// Per-layer attention weights and pre-scale layer-norm outputs, captured on
// demand for inspection and tests.
struct CrossDebugInfo {
    struct Layer {
        std::vector<double> attention;  // heads * n * n, rows are softmax rows
        std::vector<double> ln1_normed;  // n * hidden, before scale/offset
        std::vector<double> ln2_normed;
    };
    std::vector<Layer> layers;
    int seq_len = 0;
};

namespace detail {

constexpr double kLnEps = 1e-12;

// y_norm = (x - mean) / sqrt(var + eps), out = g * y_norm + b. Caches the
// normalized values and inverse stddev for the backward pass.
inline void layer_norm_forward(const double* x, const double* g, const double* b, double* out,
                               double* norm, double* inv_std, size_t n, size_t h) {
    for (size_t i = 0; i < n; ++i) {
        const double* xi = x + i * h;
        double mean = 0.0;
        for (size_t j = 0; j < h; ++j) mean += xi[j];
        mean /= static_cast<double>(h);
        double var = 0.0;
        for (size_t j = 0; j < h; ++j) {
            const double d = xi[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(h);
        const double is = 1.0 / std::sqrt(var + kLnEps);
        inv_std[i] = is;
        double* ni = norm + i * h;
        double* oi = out + i * h;
        for (size_t j = 0; j < h; ++j) {
            ni[j] = (xi[j] - mean) * is;
            oi[j] = g[j] * ni[j] + b[j];
        }
    }
}

inline void layer_norm_backward(const double* dout, const double* norm, const double* inv_std,
                                const double* g, double* dg, double* db, double* dx_accum,
                                size_t n, size_t h) {
    for (size_t i = 0; i < n; ++i) {
        const double* doi = dout + i * h;
        const double* ni = norm + i * h;
        double m1 = 0.0, m2 = 0.0;
        for (size_t j = 0; j < h; ++j) {
            const double dy = doi[j] * g[j];
            m1 += dy;
            m2 += dy * ni[j];
            dg[j] += doi[j] * ni[j];
            db[j] += doi[j];
        }
        m1 /= static_cast<double>(h);
        m2 /= static_cast<double>(h);
        double* dxi = dx_accum + i * h;
        for (size_t j = 0; j < h; ++j) {
            const double dy = doi[j] * g[j];
            dxi[j] += inv_std[i] * (dy - m1 - ni[j] * m2);
        }
    }
}

inline void add_bias_rows(double* x, const double* b, size_t n, size_t h) {
    for (size_t i = 0; i < n; ++i) {
        double* xi = x + i * h;
        for (size_t j = 0; j < h; ++j) xi[j] += b[j];
    }
}

inline void col_sum_accum(const double* x, double* acc, size_t n, size_t h) {
    for (size_t i = 0; i < n; ++i) {
        const double* xi = x + i * h;
        for (size_t j = 0; j < h; ++j) acc[j] += xi[j];
    }
}

struct CrossLayerCache {
    std::vector<double> ln1_norm, a, q, k, v, attn, c, x_mid, ln2_norm, f, h1, g;
    std::vector<double> ln1_inv_std, ln2_inv_std;
};

struct CrossActivations {
    size_t n = 0;
    std::vector<std::vector<double>> xs;  // layer inputs; xs[L] is the final hidden state
    std::vector<CrossLayerCache> layers;
    double logit = 0.0;
    double prob = 0.5;
};

}  // namespace detail

// Joint-input transformer classifier: embeddings + positions, pre-norm
// self-attention/FFN blocks with GELU, sigmoid head over the CLS position.
class CrossEncoderModel {
public:
    static CrossEncoderModel init(const CrossEncoderConfig& cfg, double head_init_scale = 0.0) {
        cfg.validate();
        CrossEncoderModel m;
        m.cfg_ = cfg;
        m.layout_ = CrossParamLayout::make(cfg);
        m.params_.assign(m.layout_.total, 0.0);
        Rng rng(mix64(cfg.seed, 0xc505eccf));
        const size_t h = static_cast<size_t>(cfg.hidden);
        const size_t f = static_cast<size_t>(cfg.ffn_dim);
        auto fill_normal = [&](size_t off, size_t count, double sd) {
            for (size_t i = 0; i < count; ++i) m.params_[off + i] = rng.normal(0.0, sd);
        };
        auto fill_ones = [&](size_t off, size_t count) {
            for (size_t i = 0; i < count; ++i) m.params_[off + i] = 1.0;
        };
        fill_normal(m.layout_.tok_emb, static_cast<size_t>(cfg.vocab_size) * h, 0.02);
        fill_normal(m.layout_.pos_emb, static_cast<size_t>(cfg.max_seq_len) * h, 0.02);
        for (const auto& l : m.layout_.layers) {
            fill_ones(l.ln1_g, h);
            fill_normal(l.wq, h * h, 0.02);
            fill_normal(l.wk, h * h, 0.02);
            fill_normal(l.wv, h * h, 0.02);
            fill_normal(l.wo, h * h, 0.02);
            fill_ones(l.ln2_g, h);
            fill_normal(l.w1, h * f, 0.02);
            fill_normal(l.w2, f * h, 0.02);
        }
        if (head_init_scale != 0.0) {
            fill_normal(m.layout_.head_w, h, head_init_scale);
            m.params_[m.layout_.head_b] = rng.normal(0.0, head_init_scale);
        }
        return m;
    }

    const CrossEncoderConfig& config() const { return cfg_; }
    const CrossParamLayout& layout() const { return layout_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    size_t param_count() const { return layout_.total; }

    uint64_t vocab_hash() const { return vocab_hash_; }
    void set_vocab_hash(uint64_t v) { vocab_hash_ = v; }
    double threshold() const { return threshold_; }
    void set_threshold(double t) { threshold_ = t; }

    double forward(const TokenSeq& seq) const {
        detail::CrossActivations acts;
        run_forward(seq, acts, nullptr);
        return acts.prob;
    }

    double forward_logit(const TokenSeq& seq) const {
        detail::CrossActivations acts;
        run_forward(seq, acts, nullptr);
        return acts.logit;
    }

    double forward_debug(const TokenSeq& seq, CrossDebugInfo* debug) const {
        detail::CrossActivations acts;
        run_forward(seq, acts, debug);
        return acts.prob;
    }

    // Per-element identical (up to bit equality) to calling forward in a
    // loop; chunks may run on worker threads.
    std::vector<double> predict_batch(const std::vector<TokenSeq>& seqs, int threads = 1) const {
        std::vector<double> out(seqs.size());
        if (seqs.empty()) return out;
        const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(seqs.size())));
        if (nthreads == 1) {
            for (size_t i = 0; i < seqs.size(); ++i) out[i] = forward(seqs[i]);
            return out;
        }
        std::vector<std::thread> workers;
        std::atomic<size_t> fail{0};
        const size_t chunk = (seqs.size() + nthreads - 1) / nthreads;
        for (int t = 0; t < nthreads; ++t) {
            const size_t lo = static_cast<size_t>(t) * chunk;
            const size_t hi = std::min(seqs.size(), lo + chunk);
            if (lo >= hi) break;
            workers.emplace_back([&, lo, hi] {
                try {
                    for (size_t i = lo; i < hi; ++i) out[i] = forward(seqs[i]);
                } catch (...) {
                    fail.fetch_add(1);
                }
            });
        }
        for (auto& w : workers) w.join();
        if (fail.load()) throw DataError("cross-encoder predict_batch: forward failed");
        return out;
    }

    // -- used by training ----------------------------------------------------

    void run_forward(const TokenSeq& seq, detail::CrossActivations& acts, CrossDebugInfo* debug) const {
        const size_t n = seq.size();
        if (n == 0 || n > static_cast<size_t>(cfg_.max_seq_len))
            throw DataError("cross-encoder forward: sequence length must be in [1, max_seq_len]");
        if (seq.ids[0] != Vocab::kClsId) throw DataError("cross-encoder forward: missing CLS token");
        const size_t h = static_cast<size_t>(cfg_.hidden);
        const size_t f = static_cast<size_t>(cfg_.ffn_dim);
        const size_t heads = static_cast<size_t>(cfg_.heads);
        const size_t dh = h / heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
        const double* p = params_.data();

        acts.n = n;
        acts.xs.assign(static_cast<size_t>(cfg_.layers) + 1, std::vector<double>(n * h));
        acts.layers.assign(static_cast<size_t>(cfg_.layers), {});
        if (debug) {
            debug->layers.assign(static_cast<size_t>(cfg_.layers), {});
            debug->seq_len = static_cast<int>(n);
        }

        double* x0 = acts.xs[0].data();
        for (size_t i = 0; i < n; ++i) {
            const int id = seq.ids[i];
            if (id < 0 || id >= cfg_.vocab_size) throw DataError("cross-encoder forward: token id out of range");
            const double* te = p + layout_.tok_emb + static_cast<size_t>(id) * h;
            const double* pe = p + layout_.pos_emb + i * h;
            double* xi = x0 + i * h;
            for (size_t j = 0; j < h; ++j) xi[j] = te[j] + pe[j];
        }

        for (size_t l = 0; l < static_cast<size_t>(cfg_.layers); ++l) {
            const auto& lp = layout_.layers[l];
            auto& c = acts.layers[l];
            const double* x_in = acts.xs[l].data();
            c.ln1_norm.resize(n * h);
            c.ln1_inv_std.resize(n);
            c.a.resize(n * h);
            detail::layer_norm_forward(x_in, p + lp.ln1_g, p + lp.ln1_b, c.a.data(), c.ln1_norm.data(),
                                       c.ln1_inv_std.data(), n, h);

            c.q.resize(n * h); c.k.resize(n * h); c.v.resize(n * h);
            gemm_nn(c.a.data(), p + lp.wq, c.q.data(), n, h, h);
            detail::add_bias_rows(c.q.data(), p + lp.bq, n, h);
            gemm_nn(c.a.data(), p + lp.wk, c.k.data(), n, h, h);
            detail::add_bias_rows(c.k.data(), p + lp.bk, n, h);
            gemm_nn(c.a.data(), p + lp.wv, c.v.data(), n, h, h);
            detail::add_bias_rows(c.v.data(), p + lp.bv, n, h);

            c.attn.assign(heads * n * n, 0.0);
            c.c.assign(n * h, 0.0);
            for (size_t hd = 0; hd < heads; ++hd) {
                double* attn = c.attn.data() + hd * n * n;
                const size_t col = hd * dh;
                for (size_t i = 0; i < n; ++i) {
                    const double* qi = c.q.data() + i * h + col;
                    double* arow = attn + i * n;
                    for (size_t j = 0; j < n; ++j) {
                        arow[j] = dot(qi, c.k.data() + j * h + col, dh) * inv_sqrt_dh;
                    }
                    softmax_row(arow, n);
                    double* ci = c.c.data() + i * h + col;
                    for (size_t j = 0; j < n; ++j) {
                        axpy(arow[j], c.v.data() + j * h + col, ci, dh);
                    }
                }
            }

            c.x_mid.resize(n * h);
            gemm_nn(c.c.data(), p + lp.wo, c.x_mid.data(), n, h, h);
            detail::add_bias_rows(c.x_mid.data(), p + lp.bo, n, h);
            for (size_t i = 0; i < n * h; ++i) c.x_mid[i] += x_in[i];

            c.ln2_norm.resize(n * h);
            c.ln2_inv_std.resize(n);
            c.f.resize(n * h);
            detail::layer_norm_forward(c.x_mid.data(), p + lp.ln2_g, p + lp.ln2_b, c.f.data(),
                                       c.ln2_norm.data(), c.ln2_inv_std.data(), n, h);

            c.h1.resize(n * f);
            gemm_nn(c.f.data(), p + lp.w1, c.h1.data(), n, h, f);
            detail::add_bias_rows(c.h1.data(), p + lp.b1, n, f);
            c.g.resize(n * f);
            for (size_t i = 0; i < n * f; ++i) c.g[i] = gelu(c.h1[i]);

            double* x_out = acts.xs[l + 1].data();
            gemm_nn(c.g.data(), p + lp.w2, x_out, n, f, h);
            detail::add_bias_rows(x_out, p + lp.b2, n, h);
            for (size_t i = 0; i < n * h; ++i) x_out[i] += c.x_mid[i];

            if (debug) {
                debug->layers[l].attention = c.attn;
                debug->layers[l].ln1_normed = c.ln1_norm;
                debug->layers[l].ln2_normed = c.ln2_norm;
            }
        }

        const double* cls = acts.xs.back().data();
        acts.logit = dot(p + layout_.head_w, cls, h) + p[layout_.head_b];
        acts.prob = sigmoid(acts.logit);
    }

    // Accumulates dLoss/dparams into grad for one example whose loss enters
    // the batch objective with weight `weight`.
    void backward(const TokenSeq& seq, const detail::CrossActivations& acts, double label, double weight,
                  double* grad) const {
        const size_t n = acts.n;
        const size_t h = static_cast<size_t>(cfg_.hidden);
        const size_t f = static_cast<size_t>(cfg_.ffn_dim);
        const size_t heads = static_cast<size_t>(cfg_.heads);
        const size_t dh = h / heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
        const double* p = params_.data();

        const double dz = (acts.prob - label) * weight;
        std::vector<double> dx(n * h, 0.0);
        const double* cls = acts.xs.back().data();
        const double* hw = p + layout_.head_w;
        for (size_t j = 0; j < h; ++j) {
            dx[j] += hw[j] * dz;
            grad[layout_.head_w + j] += cls[j] * dz;
        }
        grad[layout_.head_b] += dz;

        std::vector<double> do_(n * h), dg(n * f), dh1(n * f), df(n * h), dc(n * h), dq(n * h), dk(n * h),
            dv(n * h), da(n * h), dattn(n);
        for (size_t li = static_cast<size_t>(cfg_.layers); li-- > 0;) {
            const auto& lp = layout_.layers[li];
            const auto& c = acts.layers[li];

            // FFN block: x_out = x_mid + gelu(LN2(x_mid) W1 + b1) W2 + b2
            std::copy(dx.begin(), dx.end(), do_.begin());  // grad on the FFN output path
            gemm_nt(do_.data(), p + lp.w2, dg.data(), n, h, f);
            gemm_tn(c.g.data(), do_.data(), grad + lp.w2, n, f, h, true);
            detail::col_sum_accum(do_.data(), grad + lp.b2, n, h);
            for (size_t i = 0; i < n * f; ++i) dh1[i] = dg[i] * gelu_grad(c.h1[i]);
            gemm_nt(dh1.data(), p + lp.w1, df.data(), n, f, h);
            gemm_tn(c.f.data(), dh1.data(), grad + lp.w1, n, h, f, true);
            detail::col_sum_accum(dh1.data(), grad + lp.b1, n, f);
            // dx currently holds d x_out; residual passes it straight to x_mid
            detail::layer_norm_backward(df.data(), c.ln2_norm.data(), c.ln2_inv_std.data(), p + lp.ln2_g,
                                        grad + lp.ln2_g, grad + lp.ln2_b, dx.data(), n, h);

            // Attention block: x_mid = x_in + (heads(P V)) Wo + bo
            std::copy(dx.begin(), dx.end(), do_.begin());  // grad on x_mid
            gemm_nt(do_.data(), p + lp.wo, dc.data(), n, h, h);
            gemm_tn(c.c.data(), do_.data(), grad + lp.wo, n, h, h, true);
            detail::col_sum_accum(do_.data(), grad + lp.bo, n, h);

            std::fill(dq.begin(), dq.end(), 0.0);
            std::fill(dk.begin(), dk.end(), 0.0);
            std::fill(dv.begin(), dv.end(), 0.0);
            for (size_t hd = 0; hd < heads; ++hd) {
                const double* attn = c.attn.data() + hd * n * n;
                const size_t col = hd * dh;
                for (size_t i = 0; i < n; ++i) {
                    const double* arow = attn + i * n;
                    const double* dci = dc.data() + i * h + col;
                    // dP row then softmax backward to scores
                    double dot_pa = 0.0;
                    for (size_t j = 0; j < n; ++j) {
                        dattn[j] = dot(dci, c.v.data() + j * h + col, dh);
                        dot_pa += dattn[j] * arow[j];
                    }
                    for (size_t j = 0; j < n; ++j) {
                        const double ds = arow[j] * (dattn[j] - dot_pa) * inv_sqrt_dh;
                        axpy(ds, c.k.data() + j * h + col, dq.data() + i * h + col, dh);
                        axpy(ds, c.q.data() + i * h + col, dk.data() + j * h + col, dh);
                        axpy(arow[j], dci, dv.data() + j * h + col, dh);
                    }
                }
            }

            std::fill(da.begin(), da.end(), 0.0);
            gemm_nt(dq.data(), p + lp.wq, da.data(), n, h, h, true);
            gemm_tn(c.a.data(), dq.data(), grad + lp.wq, n, h, h, true);
            detail::col_sum_accum(dq.data(), grad + lp.bq, n, h);
            gemm_nt(dk.data(), p + lp.wk, da.data(), n, h, h, true);
            gemm_tn(c.a.data(), dk.data(), grad + lp.wk, n, h, h, true);
            detail::col_sum_accum(dk.data(), grad + lp.bk, n, h);
            gemm_nt(dv.data(), p + lp.wv, da.data(), n, h, h, true);
            gemm_tn(c.a.data(), dv.data(), grad + lp.wv, n, h, h, true);
            detail::col_sum_accum(dv.data(), grad + lp.bv, n, h);

            // dx holds d x_mid; LN1 feeds from x_in, residual adds the rest
            detail::layer_norm_backward(da.data(), c.ln1_norm.data(), c.ln1_inv_std.data(), p + lp.ln1_g,
                                        grad + lp.ln1_g, grad + lp.ln1_b, dx.data(), n, h);
        }

        for (size_t i = 0; i < n; ++i) {
            const double* dxi = dx.data() + i * h;
            axpy(1.0, dxi, grad + layout_.tok_emb + static_cast<size_t>(seq.ids[i]) * h, h);
            axpy(1.0, dxi, grad + layout_.pos_emb + i * h, h);
        }
    }

private:
    CrossEncoderConfig cfg_;
    CrossParamLayout layout_;
    std::vector<double> params_;
    uint64_t vocab_hash_ = 0;
    double threshold_ = 0.5;
};

struct CrossExample {
    TokenSeq seq;
    int label = 0;
};

struct CrossTrainConfig {
    int epochs = 4;
    double lr = 1e-3;  // desk-scale Adam default; paper-scale preset uses 2e-5
    int batch_size = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 1;
    int threads = 1;

    static CrossTrainConfig paper_scale() {
        CrossTrainConfig c;
        c.epochs = 4;
        c.lr = 2e-5;
        return c;
    }

    void validate() const {
        if (epochs < 1) throw ConfigError("cross train: epochs must be >= 1");
        if (lr <= 0.0) throw ConfigError("cross train: lr must be > 0");
        if (batch_size < 1) throw ConfigError("cross train: batch_size must be >= 1");
    }
};

inline double cross_mean_loss(const CrossEncoderModel& model, const std::vector<CrossExample>& data) {
    if (data.empty()) return 0.0;
    double loss = 0.0;
    for (const auto& ex : data) loss += bce_from_logit(model.forward_logit(ex.seq), ex.label);
    return loss / static_cast<double>(data.size());
}

namespace detail {

// The batch is always split into a fixed number of gradient slices and the
// slice sums are reduced in index order, so results are bit-identical whether
// slices run serially or on worker threads.
constexpr int kGradSlices = 2;

inline double cross_batch_grad(const CrossEncoderModel& model, const std::vector<const CrossExample*>& batch,
                               int threads, std::vector<std::vector<double>>& slice_grads, double* grad_out) {
    const size_t nparams = model.param_count();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    slice_grads.resize(kGradSlices);
    double slice_loss[kGradSlices] = {0.0, 0.0};
    auto run_slice = [&](int s) {
        auto& g = slice_grads[static_cast<size_t>(s)];
        g.assign(nparams, 0.0);
        CrossActivations acts;
        const size_t chunk = (batch.size() + kGradSlices - 1) / kGradSlices;
        const size_t lo = static_cast<size_t>(s) * chunk;
        const size_t hi = std::min(batch.size(), lo + chunk);
        double loss = 0.0;
        for (size_t i = lo; i < hi; ++i) {
            const auto& ex = *batch[i];
            model.run_forward(ex.seq, acts, nullptr);
            loss += bce_from_logit(acts.logit, ex.label) * inv_b;
            model.backward(ex.seq, acts, ex.label, inv_b, g.data());
        }
        slice_loss[s] = loss;
    };
    if (threads > 1) {
        std::thread worker(run_slice, 1);
        run_slice(0);
        worker.join();
    } else {
        for (int s = 0; s < kGradSlices; ++s) run_slice(s);
    }
    for (size_t i = 0; i < nparams; ++i) grad_out[i] = slice_grads[0][i] + slice_grads[1][i];
    return slice_loss[0] + slice_loss[1];
}

}  // namespace detail

// Adam on binary cross-entropy. Returns the mean loss per epoch.
inline TrainTrace train_cross(CrossEncoderModel& model, const std::vector<CrossExample>& data,
                              const CrossTrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw DataError("cross train: empty training set");
    for (const auto& ex : data) {
        if (ex.label != 0 && ex.label != 1) throw DataError("cross train: labels must be 0 or 1");
    }
    const size_t nparams = model.param_count();
    std::vector<double> grad(nparams), m(nparams, 0.0), v(nparams, 0.0);
    std::vector<std::vector<double>> slice_grads;
    Rng rng(mix64(cfg.seed, 0xadab001));
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    TrainTrace trace;
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        size_t seen = 0;
        std::vector<const CrossExample*> batch;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            batch.clear();
            for (size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
            const double loss = detail::cross_batch_grad(model, batch, cfg.threads, slice_grads, grad.data());
            if (!std::isfinite(loss))
                throw DataError("cross train: divergence at epoch " + std::to_string(epoch));
            epoch_loss += loss * static_cast<double>(batch.size());
            seen += batch.size();
            ++step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            double* p = model.params().data();
            for (size_t i = 0; i < nparams; ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                p[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
            }
        }
        trace.epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
    }
    return trace;
}

// Central-difference check over every parameter; returns the max relative
// error |ga - gn| / max(1e-8, |ga| + |gn|).
inline double grad_check_cross(const CrossEncoderModel& model, const std::vector<CrossExample>& probe,
                               double eps = 1e-5) {
    if (eps <= 0.0) throw ConfigError("grad_check: eps must be > 0");
    CrossEncoderModel work = model;
    const size_t nparams = work.param_count();
    std::vector<double> analytic(nparams, 0.0);
    detail::CrossActivations acts;
    const double inv_b = 1.0 / static_cast<double>(probe.size());
    for (const auto& ex : probe) {
        work.run_forward(ex.seq, acts, nullptr);
        work.backward(ex.seq, acts, ex.label, inv_b, analytic.data());
    }
    auto batch_loss = [&]() {
        double loss = 0.0;
        for (const auto& ex : probe) loss += bce_from_logit(work.forward_logit(ex.seq), ex.label) * inv_b;
        return loss;
    };
    double max_err = 0.0;
    auto& params = work.params();
    for (size_t i = 0; i < nparams; ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double lp = batch_loss();
        params[i] = saved - eps;
        const double lm = batch_loss();
        params[i] = saved;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double err = std::fabs(analytic[i] - numeric) /
                           std::max(1e-8, std::fabs(analytic[i]) + std::fabs(numeric));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace kpalign
