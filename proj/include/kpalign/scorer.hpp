// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <atomic>
#include <cstdio>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "kpalign/bi_encoder.hpp"
#include "kpalign/catalog.hpp"
#include "kpalign/checkpoint.hpp"
#include "kpalign/cross_encoder.hpp"
#include "kpalign/jaccard.hpp"
#include "kpalign/score_store.hpp"

namespace kpalign {

// Exact call counts for the serving contracts: bi-encoders pay per entity,
// cross-encoders per pair.
struct ScoringCounters {
    std::atomic<uint64_t> encodes{0};
    std::atomic<uint64_t> forwards{0};

    void reset() {
        encodes = 0;
        forwards = 0;
    }
};

class RelevanceScorer {
public:
    virtual ~RelevanceScorer() = default;

    virtual std::string model_version() const = 0;
    virtual double threshold() const = 0;

    // Scores every pair exactly once, in input order. Unknown ids raise
    // DataError naming the id. updated_at of each record is the catalog
    // update time of the fresher side.
    virtual std::vector<ScoreRecord> score_pairs(const Catalog& catalog, const std::vector<PairKey>& pairs,
                                                 ScoringCounters* counters) const = 0;

protected:
    ScoreRecord make_record(const ItemDoc& item, const Keyphrase& kp, double score) const {
        ScoreRecord r;
        r.item_id = item.item_id;
        r.keyphrase_id = kp.keyphrase_id;
        r.score = score;
        r.pass = score >= threshold();
        r.model_version = model_version();
        r.updated_at = std::max(item.updated_at_ms, kp.updated_at_ms);
        return r;
    }
};

class JaccardScorer : public RelevanceScorer {
public:
    explicit JaccardScorer(JaccardConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    std::string model_version() const override {
        char buf[64];
        std::snprintf(buf, sizeof buf, "jaccard-t%.2f%s", cfg_.threshold, cfg_.use_category_tokens ? "+cat" : "");
        return buf;
    }

    double threshold() const override { return cfg_.threshold; }

    std::vector<ScoreRecord> score_pairs(const Catalog& catalog, const std::vector<PairKey>& pairs,
                                         ScoringCounters*) const override {
        std::unordered_map<int64_t, TokenSet> item_tokens;
        std::unordered_map<int64_t, TokenSet> kp_tokens;
        std::vector<ScoreRecord> out;
        out.reserve(pairs.size());
        for (const auto& key : pairs) {
            const auto& item = catalog.item(key.item_id);
            const auto& kp = catalog.keyphrase(key.keyphrase_id);
            auto [iit, inew] = item_tokens.try_emplace(key.item_id);
            if (inew) {
                iit->second = token_set(item.title);
                if (cfg_.use_category_tokens) {
                    for (auto& t : tokenize(item.category_name)) iit->second.insert(std::move(t));
                }
            }
            auto [kit, knew] = kp_tokens.try_emplace(key.keyphrase_id);
            if (knew) kit->second = token_set(kp.text);
            out.push_back(make_record(item, kp, jaccard_index(iit->second, kit->second)));
        }
        return out;
    }

private:
    JaccardConfig cfg_;
};

// Two-tower serving: every catalog entity is encoded exactly once per call,
// then pairs are plain vector comparisons.
class BiEncoderScorer : public RelevanceScorer {
public:
    BiEncoderScorer(BiEncoderModel model, Vocab vocab, int max_len = 64)
        : model_(std::move(model)), vocab_(std::move(vocab)), max_len_(max_len) {
        version_ = model_version_of(model_);
    }

    const BiEncoderModel& model() const { return model_; }
    std::string model_version() const override { return version_; }
    double threshold() const override { return model_.threshold(); }

    std::vector<ScoreRecord> score_pairs(const Catalog& catalog, const std::vector<PairKey>& pairs,
                                         ScoringCounters* counters) const override {
        for (const auto& key : pairs) {
            catalog.item(key.item_id);
            catalog.keyphrase(key.keyphrase_id);
        }
        const bool normalized = model_.objective() != BiObjective::kSoftmax;
        const size_t d = static_cast<size_t>(model_.dim());
        std::unordered_map<int64_t, std::vector<double>> item_vecs, kp_vecs;
        item_vecs.reserve(catalog.items.size() * 2);
        kp_vecs.reserve(catalog.keyphrases.size() * 2);
        for (const auto& item : catalog.items) {
            std::vector<double> u(d);
            model_.encode_into(encode_bi_item(item, vocab_, static_cast<size_t>(max_len_)), u.data(), normalized);
            item_vecs.emplace(item.item_id, std::move(u));
            if (counters) counters->encodes.fetch_add(1, std::memory_order_relaxed);
        }
        for (const auto& kp : catalog.keyphrases) {
            std::vector<double> v(d);
            model_.encode_into(encode_bi_keyphrase(kp, vocab_, static_cast<size_t>(max_len_)), v.data(), normalized);
            kp_vecs.emplace(kp.keyphrase_id, std::move(v));
            if (counters) counters->encodes.fetch_add(1, std::memory_order_relaxed);
        }

        std::vector<ScoreRecord> out;
        out.reserve(pairs.size());
        for (const auto& key : pairs) {
            const auto& item = catalog.item(key.item_id);
            const auto& kp = catalog.keyphrase(key.keyphrase_id);
            const auto& u = item_vecs.at(key.item_id);
            const auto& v = kp_vecs.at(key.keyphrase_id);
            double score;
            if (normalized) {
                score = std::clamp((dot(u.data(), v.data(), d) + 1.0) * 0.5, 0.0, 1.0);
            } else {
                double z[2];
                model_.head_logits(u.data(), v.data(), z);
                softmax_row(z, 2);
                score = z[1];
            }
            out.push_back(make_record(item, kp, score));
        }
        return out;
    }

private:
    BiEncoderModel model_;
    Vocab vocab_;
    int max_len_;
    std::string version_;
};

// Joint serving: one forward per pair.
class CrossEncoderScorer : public RelevanceScorer {
public:
    CrossEncoderScorer(CrossEncoderModel model, Vocab vocab, int max_len = 0, int threads = 1)
        : model_(std::move(model)), vocab_(std::move(vocab)), threads_(threads) {
        max_len_ = max_len > 0 ? max_len : model_.config().max_seq_len;
        version_ = model_version_of(model_);
    }

    const CrossEncoderModel& model() const { return model_; }
    std::string model_version() const override { return version_; }
    double threshold() const override { return model_.threshold(); }

    std::vector<ScoreRecord> score_pairs(const Catalog& catalog, const std::vector<PairKey>& pairs,
                                         ScoringCounters* counters) const override {
        std::vector<TokenSeq> seqs;
        seqs.reserve(pairs.size());
        for (const auto& key : pairs) {
            seqs.push_back(encode_cross_pair(catalog.keyphrase(key.keyphrase_id), catalog.item(key.item_id),
                                             vocab_, static_cast<size_t>(max_len_)));
        }
        const auto probs = model_.predict_batch(seqs, threads_);
        if (counters) counters->forwards.fetch_add(pairs.size(), std::memory_order_relaxed);
        std::vector<ScoreRecord> out;
        out.reserve(pairs.size());
        for (size_t i = 0; i < pairs.size(); ++i) {
            out.push_back(
                make_record(catalog.item(pairs[i].item_id), catalog.keyphrase(pairs[i].keyphrase_id), probs[i]));
        }
        return out;
    }

private:
    CrossEncoderModel model_;
    Vocab vocab_;
    int max_len_;
    int threads_;
    std::string version_;
};

}  // namespace kpalign
