// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kpalign/common.hpp"
#include "kpalign/linalg.hpp"
#include "kpalign/text.hpp"

namespace kpalign {

enum class BiObjective { kContrastive, kSoftmax, kIrns };

inline const char* to_string(BiObjective o) {
    switch (o) {
        case BiObjective::kContrastive: return "contrastive";
        case BiObjective::kSoftmax: return "softmax";
        case BiObjective::kIrns: return "irns";
    }
    return "?";
}

inline BiObjective bi_objective_from_string(std::string_view s) {
    if (s == "contrastive") return BiObjective::kContrastive;
    if (s == "softmax") return BiObjective::kSoftmax;
    if (s == "irns") return BiObjective::kIrns;
    throw ConfigError("unknown bi-encoder objective: " + std::string(s));
}

struct BiTrainConfig {
    BiObjective objective = BiObjective::kContrastive;
    int epochs = 4;
    double lr = 0.05;     // desk-scale SGD default; 2e-5 is the paper-scale reference
    int batch_size = 32;
    double margin = 0.5;       // contrastive
    double temperature = 0.1;  // irns
    uint64_t seed = 1;

    void validate() const {
        if (lr <= 0.0) throw ConfigError("bi train: lr must be > 0");
        if (epochs < 1) throw ConfigError("bi train: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("bi train: batch_size must be >= 1");
        if (margin <= 0.0) throw ConfigError("bi train: margin must be > 0");
        if (temperature <= 0.0) throw ConfigError("bi train: temperature must be > 0");
    }
};

struct BiLabeledPair {
    TokenSeq item;
    TokenSeq keyphrase;
    int label = 0;  // 1 = Search pass, 0 = fail
};

// IRNS training input: positives only, there is deliberately no label field.
struct BiPositivePair {
    TokenSeq item;
    TokenSeq keyphrase;
};

// Two-tower model: a shared embedding matrix, mean pooling, and (for the
// softmax objective) a 2-way classifier head over (u, v, |u-v|).
class BiEncoderModel {
public:
    static BiEncoderModel init(int vocab_size, int dim, BiObjective objective, uint64_t seed,
                               uint64_t vocab_hash = 0) {
        if (vocab_size < 4 || dim < 1) throw ConfigError("bi-encoder: vocab_size >= 4 and dim >= 1 required");
        BiEncoderModel m;
        m.vocab_size_ = vocab_size;
        m.dim_ = dim;
        m.objective_ = objective;
        m.seed_ = seed;
        m.vocab_hash_ = vocab_hash;
        m.params_.assign(m.param_count(), 0.0);
        Rng rng(mix64(seed, 0xb1e2c0de));
        const size_t emb = static_cast<size_t>(vocab_size) * dim;
        for (size_t i = 0; i < emb; ++i) m.params_[i] = rng.normal(0.0, 0.1);
        if (objective == BiObjective::kSoftmax) {
            for (size_t i = emb; i < m.params_.size(); ++i) m.params_[i] = rng.normal(0.0, 0.1);
        }
        return m;
    }

    int dim() const { return dim_; }
    int vocab_size() const { return vocab_size_; }
    BiObjective objective() const { return objective_; }
    uint64_t seed() const { return seed_; }
    uint64_t vocab_hash() const { return vocab_hash_; }
    void set_vocab_hash(uint64_t h) { vocab_hash_ = h; }
    double threshold() const { return threshold_; }
    void set_threshold(double t) { threshold_ = t; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    size_t param_count() const {
        size_t n = static_cast<size_t>(vocab_size_) * dim_;
        if (objective_ == BiObjective::kSoftmax) n += 2 * 3 * static_cast<size_t>(dim_) + 2;
        return n;
    }

    const double* embedding_row(int token_id) const { return params_.data() + static_cast<size_t>(token_id) * dim_; }
    const double* head_w() const { return params_.data() + static_cast<size_t>(vocab_size_) * dim_; }
    const double* head_b() const { return head_w() + 2 * 3 * static_cast<size_t>(dim_); }

    // Mean of token embeddings; L2-normalized except for the softmax
    // objective, whose head consumes the raw mean.
    std::vector<double> encode(const TokenSeq& seq) const {
        std::vector<double> out(static_cast<size_t>(dim_));
        encode_into(seq, out.data(), objective_ != BiObjective::kSoftmax);
        return out;
    }

    double score_pair(const TokenSeq& item_seq, const TokenSeq& kp_seq) const {
        if (objective_ == BiObjective::kSoftmax) {
            std::vector<double> u(static_cast<size_t>(dim_)), v(static_cast<size_t>(dim_));
            encode_into(item_seq, u.data(), false);
            encode_into(kp_seq, v.data(), false);
            double z[2];
            head_logits(u.data(), v.data(), z);
            softmax_row(z, 2);
            return z[1];
        }
        std::vector<double> u(static_cast<size_t>(dim_)), v(static_cast<size_t>(dim_));
        encode_into(item_seq, u.data(), true);
        encode_into(kp_seq, v.data(), true);
        const double cosine = dot(u.data(), v.data(), static_cast<size_t>(dim_));
        return std::clamp((cosine + 1.0) * 0.5, 0.0, 1.0);
    }

    // -- internals shared by training and scoring ---------------------------

    void encode_into(const TokenSeq& seq, double* out, bool normalize, double* raw_norm_out = nullptr) const {
        if (seq.empty()) throw DataError("bi-encoder encode: empty input");
        const size_t d = static_cast<size_t>(dim_);
        for (size_t j = 0; j < d; ++j) out[j] = 0.0;
        for (int id : seq.ids) {
            if (id < 0 || id >= vocab_size_) throw DataError("bi-encoder encode: token id out of range");
            axpy(1.0, embedding_row(id), out, d);
        }
        const double inv_n = 1.0 / static_cast<double>(seq.size());
        for (size_t j = 0; j < d; ++j) out[j] *= inv_n;
        double r = 0.0;
        if (normalize) {
            r = l2_norm(out, d);
            if (r > 0.0) {
                for (size_t j = 0; j < d; ++j) out[j] /= r;
            }
        }
        if (raw_norm_out) *raw_norm_out = r;
    }

    void head_logits(const double* u, const double* v, double* z) const {
        const size_t d = static_cast<size_t>(dim_);
        const double* w = head_w();
        const double* b = head_b();
        for (int c = 0; c < 2; ++c) {
            const double* wc = w + static_cast<size_t>(c) * 3 * d;
            double acc = b[c];
            for (size_t j = 0; j < d; ++j) acc += wc[j] * u[j];
            for (size_t j = 0; j < d; ++j) acc += wc[d + j] * v[j];
            for (size_t j = 0; j < d; ++j) acc += wc[2 * d + j] * std::fabs(u[j] - v[j]);
            z[c] = acc;
        }
    }

private:
    int vocab_size_ = 0;
    int dim_ = 0;
    BiObjective objective_ = BiObjective::kContrastive;
    uint64_t seed_ = 0;
    uint64_t vocab_hash_ = 0;
    double threshold_ = 0.5;
    std::vector<double> params_;
};

namespace detail {

// Backprop through L2 normalization: u = raw/r with r = ||raw||.
inline void normalize_backward(const double* u, double r, const double* du, double* draw, size_t d) {
    if (r <= 0.0) {
        for (size_t j = 0; j < d; ++j) draw[j] = 0.0;
        return;
    }
    const double proj = dot(du, u, d);
    for (size_t j = 0; j < d; ++j) draw[j] = (du[j] - u[j] * proj) / r;
}

// Scatter the pooled-mean gradient back onto embedding rows.
inline void pool_backward(const TokenSeq& seq, const double* draw, double* grad_emb, size_t d) {
    const double inv_n = 1.0 / static_cast<double>(seq.size());
    for (int id : seq.ids) {
        axpy(inv_n, draw, grad_emb + static_cast<size_t>(id) * d, d);
    }
}

struct EncodedSide {
    std::vector<double> vec;  // normalized or raw mean depending on objective
    double raw_norm = 0.0;
};

inline EncodedSide encode_side(const BiEncoderModel& m, const TokenSeq& seq, bool normalize) {
    EncodedSide s;
    s.vec.resize(static_cast<size_t>(m.dim()));
    m.encode_into(seq, s.vec.data(), normalize, &s.raw_norm);
    return s;
}

}  // namespace detail

// Mean loss over a labeled batch, with parameter gradients accumulated into
// `grad` (same layout as model.params()) when grad != nullptr.
inline double bi_loss_and_grad(const BiEncoderModel& model, const std::vector<BiLabeledPair>& batch,
                               const BiTrainConfig& cfg, std::vector<double>* grad) {
    if (batch.empty()) return 0.0;
    const size_t d = static_cast<size_t>(model.dim());
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    std::vector<double> du(d), dv(d), draw(d);

    if (cfg.objective == BiObjective::kContrastive) {
        for (const auto& ex : batch) {
            auto u = detail::encode_side(model, ex.item, true);
            auto v = detail::encode_side(model, ex.keyphrase, true);
            std::vector<double> diff(d);
            for (size_t j = 0; j < d; ++j) diff[j] = u.vec[j] - v.vec[j];
            const double dist = l2_norm(diff.data(), d);
            double scale = 0.0;  // dl/du = scale * diff
            if (ex.label == 1) {
                loss += dist * dist * inv_b;
                scale = 2.0;
            } else if (dist < cfg.margin) {
                const double gap = cfg.margin - dist;
                loss += gap * gap * inv_b;
                scale = dist > 1e-12 ? -2.0 * gap / dist : 0.0;
            }
            if (grad && scale != 0.0) {
                for (size_t j = 0; j < d; ++j) du[j] = scale * diff[j] * inv_b;
                detail::normalize_backward(u.vec.data(), u.raw_norm, du.data(), draw.data(), d);
                detail::pool_backward(ex.item, draw.data(), grad->data(), d);
                for (size_t j = 0; j < d; ++j) dv[j] = -du[j];
                detail::normalize_backward(v.vec.data(), v.raw_norm, dv.data(), draw.data(), d);
                detail::pool_backward(ex.keyphrase, draw.data(), grad->data(), d);
            }
        }
        return loss;
    }

    if (cfg.objective == BiObjective::kSoftmax) {
        const size_t emb_count = static_cast<size_t>(model.vocab_size()) * d;
        std::vector<double> df(3 * d);
        for (const auto& ex : batch) {
            auto u = detail::encode_side(model, ex.item, false);
            auto v = detail::encode_side(model, ex.keyphrase, false);
            double z[2];
            model.head_logits(u.vec.data(), v.vec.data(), z);
            double p[2] = {z[0], z[1]};
            softmax_row(p, 2);
            const int y = ex.label ? 1 : 0;
            loss += -std::log(std::max(p[y], 1e-300)) * inv_b;
            if (!grad) continue;

            double dz[2] = {(p[0] - (y == 0 ? 1.0 : 0.0)) * inv_b, (p[1] - (y == 1 ? 1.0 : 0.0)) * inv_b};
            double* gw = grad->data() + emb_count;
            double* gb = gw + 2 * 3 * d;
            const double* w = model.head_w();
            std::fill(df.begin(), df.end(), 0.0);
            for (int c = 0; c < 2; ++c) {
                double* gwc = gw + static_cast<size_t>(c) * 3 * d;
                const double* wc = w + static_cast<size_t>(c) * 3 * d;
                gb[c] += dz[c];
                for (size_t j = 0; j < d; ++j) {
                    const double absdiff = std::fabs(u.vec[j] - v.vec[j]);
                    gwc[j] += dz[c] * u.vec[j];
                    gwc[d + j] += dz[c] * v.vec[j];
                    gwc[2 * d + j] += dz[c] * absdiff;
                    df[j] += wc[j] * dz[c];
                    df[d + j] += wc[d + j] * dz[c];
                    df[2 * d + j] += wc[2 * d + j] * dz[c];
                }
            }
            for (size_t j = 0; j < d; ++j) {
                const double s = u.vec[j] > v.vec[j] ? 1.0 : (u.vec[j] < v.vec[j] ? -1.0 : 0.0);
                du[j] = df[j] + s * df[2 * d + j];
                dv[j] = df[d + j] - s * df[2 * d + j];
            }
            detail::pool_backward(ex.item, du.data(), grad->data(), d);
            detail::pool_backward(ex.keyphrase, dv.data(), grad->data(), d);
        }
        return loss;
    }

    throw ConfigError("bi_loss_and_grad: labeled batch requires contrastive or softmax objective");
}

// IRNS batch loss: cross-entropy of each item against every keyphrase in the
// batch (cosine/temperature logits), the diagonal being the true class.
inline double bi_loss_and_grad(const BiEncoderModel& model, const std::vector<BiPositivePair>& batch,
                               const BiTrainConfig& cfg, std::vector<double>* grad) {
    if (cfg.objective != BiObjective::kIrns)
        throw ConfigError("bi_loss_and_grad: positives-only batch requires the irns objective");
    if (batch.empty()) return 0.0;
    const size_t d = static_cast<size_t>(model.dim());
    const size_t b = batch.size();
    std::vector<detail::EncodedSide> us(b), vs(b);
    for (size_t i = 0; i < b; ++i) {
        us[i] = detail::encode_side(model, batch[i].item, true);
        vs[i] = detail::encode_side(model, batch[i].keyphrase, true);
    }
    const double inv_tau = 1.0 / cfg.temperature;
    std::vector<double> scores(b * b);
    for (size_t i = 0; i < b; ++i) {
        for (size_t j = 0; j < b; ++j) scores[i * b + j] = dot(us[i].vec.data(), vs[j].vec.data(), d) * inv_tau;
        softmax_row(scores.data() + i * b, b);
    }
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(b);
    for (size_t i = 0; i < b; ++i) loss += -std::log(std::max(scores[i * b + i], 1e-300)) * inv_b;

    if (grad) {
        std::vector<double> du(d), dv(d), draw(d);
        for (size_t i = 0; i < b; ++i) {
            std::fill(du.begin(), du.end(), 0.0);
            for (size_t j = 0; j < b; ++j) {
                const double ds = (scores[i * b + j] - (i == j ? 1.0 : 0.0)) * inv_b * inv_tau;
                axpy(ds, vs[j].vec.data(), du.data(), d);
            }
            detail::normalize_backward(us[i].vec.data(), us[i].raw_norm, du.data(), draw.data(), d);
            detail::pool_backward(batch[i].item, draw.data(), grad->data(), d);
        }
        for (size_t j = 0; j < b; ++j) {
            std::fill(dv.begin(), dv.end(), 0.0);
            for (size_t i = 0; i < b; ++i) {
                const double ds = (scores[i * b + j] - (i == j ? 1.0 : 0.0)) * inv_b * inv_tau;
                axpy(ds, us[i].vec.data(), dv.data(), d);
            }
            detail::normalize_backward(vs[j].vec.data(), vs[j].raw_norm, dv.data(), draw.data(), d);
            detail::pool_backward(batch[j].keyphrase, draw.data(), grad->data(), d);
        }
    }
    return loss;
}

namespace detail {

template <typename Example>
TrainTrace sgd_train(BiEncoderModel& model, const std::vector<Example>& data, const BiTrainConfig& cfg) {
    cfg.validate();
    if (model.objective() != cfg.objective)
        throw ConfigError("bi train: model objective does not match train config");
    if (data.empty()) throw DataError("bi train: empty training set");
    TrainTrace trace;
    Rng rng(mix64(cfg.seed, 0x7ea1adda));
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> grad(model.param_count());
    std::vector<Example> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            batch.clear();
            for (size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
            std::fill(grad.begin(), grad.end(), 0.0);
            const double loss = bi_loss_and_grad(model, batch, cfg, &grad);
            if (!std::isfinite(loss))
                throw DataError("bi train: divergence at epoch " + std::to_string(epoch));
            epoch_loss += loss * static_cast<double>(batch.size());
            seen += batch.size();
            double* p = model.params().data();
            for (size_t i = 0; i < grad.size(); ++i) p[i] -= cfg.lr * grad[i];
        }
        trace.epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
    }
    return trace;
}

template <typename Example>
double central_diff_check(const BiEncoderModel& model, const std::vector<Example>& probe,
                          const BiTrainConfig& cfg, double eps) {
    if (eps <= 0.0) throw ConfigError("grad_check: eps must be > 0");
    BiEncoderModel work = model;
    std::vector<double> analytic(work.param_count(), 0.0);
    bi_loss_and_grad(work, probe, cfg, &analytic);
    double max_err = 0.0;
    auto& params = work.params();
    for (size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double lp = bi_loss_and_grad(work, probe, cfg, nullptr);
        params[i] = saved - eps;
        const double lm = bi_loss_and_grad(work, probe, cfg, nullptr);
        params[i] = saved;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double err = std::fabs(analytic[i] - numeric) /
                           std::max(1e-8, std::fabs(analytic[i]) + std::fabs(numeric));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace detail

inline TrainTrace train_bi(BiEncoderModel& model, const std::vector<BiLabeledPair>& data,
                           const BiTrainConfig& cfg) {
    if (cfg.objective == BiObjective::kIrns)
        throw ConfigError("bi train: irns objective takes positives only, not labeled pairs");
    return detail::sgd_train(model, data, cfg);
}

inline TrainTrace train_bi(BiEncoderModel& model, const std::vector<BiPositivePair>& data,
                           const BiTrainConfig& cfg) {
    return detail::sgd_train(model, data, cfg);
}

// Max relative error between analytic and central-difference gradients over
// every parameter: |ga - gn| / max(1e-8, |ga| + |gn|).
inline double grad_check_bi(const BiEncoderModel& model, const std::vector<BiLabeledPair>& probe,
                            const BiTrainConfig& cfg, double eps = 1e-6) {
    return detail::central_diff_check(model, probe, cfg, eps);
}

inline double grad_check_bi(const BiEncoderModel& model, const std::vector<BiPositivePair>& probe,
                            const BiTrainConfig& cfg, double eps = 1e-6) {
    return detail::central_diff_check(model, probe, cfg, eps);
}

}  // namespace kpalign
