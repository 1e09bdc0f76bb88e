// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "kpalign/common.hpp"
#include "kpalign/text.hpp"

namespace kpalign {

// Binary verdict from the Search relevance filter; the alignment target.
struct RelevanceJudgment {
    int64_t item_id = 0;
    int64_t keyphrase_id = 0;
    int label = 0;  // 1 = pass, 0 = fail
};

struct PairPrediction {
    int64_t item_id = 0;
    int64_t keyphrase_id = 0;
    double score = 0.0;
    bool pass = false;
};

struct ConfusionCounts {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;

    int64_t total() const { return tp + fp + fn + tn; }
};

struct PRF1Report {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int64_t support_pos = 0;
    int64_t support_neg = 0;
};

inline ConfusionCounts confusion(const std::vector<PairPrediction>& preds,
                                 const std::vector<RelevanceJudgment>& judgments) {
    std::unordered_map<PairKey, int, PairKeyHash> labels;
    labels.reserve(judgments.size() * 2);
    for (const auto& j : judgments) labels[{j.item_id, j.keyphrase_id}] = j.label;
    ConfusionCounts c;
    std::vector<const PairPrediction*> missing;
    for (const auto& p : preds) {
        auto it = labels.find({p.item_id, p.keyphrase_id});
        if (it == labels.end()) {
            missing.push_back(&p);
            continue;
        }
        if (p.pass) {
            it->second == 1 ? ++c.tp : ++c.fp;
        } else {
            it->second == 1 ? ++c.fn : ++c.tn;
        }
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "confusion: " << missing.size() << " predicted pair(s) have no judgment:";
        const size_t show = std::min<size_t>(missing.size(), 10);
        for (size_t i = 0; i < show; ++i)
            msg << " (" << missing[i]->item_id << "," << missing[i]->keyphrase_id << ")";
        if (missing.size() > show) msg << " ...";
        throw DataError(msg.str());
    }
    return c;
}

inline PRF1Report prf1(const ConfusionCounts& c) {
    PRF1Report r;
    r.support_pos = c.tp + c.fn;
    r.support_neg = c.fp + c.tn;
    r.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    r.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    r.f1 = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

// False negatives bucketed by keyphrase token count.
inline std::map<int, int64_t> fn_length_breakdown(const std::vector<PairPrediction>& preds,
                                                  const std::vector<RelevanceJudgment>& judgments,
                                                  const std::vector<Keyphrase>& keyphrases) {
    std::unordered_map<PairKey, int, PairKeyHash> labels;
    for (const auto& j : judgments) labels[{j.item_id, j.keyphrase_id}] = j.label;
    std::unordered_map<int64_t, int> kp_len;
    for (const auto& kp : keyphrases) kp_len[kp.keyphrase_id] = static_cast<int>(tokenize(kp.text).size());
    std::map<int, int64_t> buckets;
    for (const auto& p : preds) {
        auto it = labels.find({p.item_id, p.keyphrase_id});
        if (it == labels.end()) throw DataError("fn_length_breakdown: prediction without judgment");
        if (!p.pass && it->second == 1) {
            auto lit = kp_len.find(p.keyphrase_id);
            if (lit == kp_len.end()) throw DataError("fn_length_breakdown: unknown keyphrase id");
            ++buckets[lit->second];
        }
    }
    return buckets;
}

// Threshold maximizing F1 over (score, label) pairs; used to calibrate the
// pass threshold of score-based models on validation data.
inline double best_f1_threshold(std::vector<std::pair<double, int>> scored, double fallback = 0.5) {
    if (scored.empty()) return fallback;
    std::sort(scored.begin(), scored.end());
    int64_t total_pos = 0;
    for (const auto& [s, y] : scored) total_pos += y;
    if (total_pos == 0) return fallback;
    // Sweep: threshold below the lowest score passes everything.
    int64_t tp = total_pos, fp = static_cast<int64_t>(scored.size()) - total_pos;
    double best_f1 = -1.0, best_thr = fallback;
    auto f1_of = [](int64_t tp_, int64_t fp_, int64_t fn_) {
        const double p = (tp_ + fp_) > 0 ? static_cast<double>(tp_) / static_cast<double>(tp_ + fp_) : 0.0;
        const double r = (tp_ + fn_) > 0 ? static_cast<double>(tp_) / static_cast<double>(tp_ + fn_) : 0.0;
        return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    };
    double thr = scored.front().first - 1e-9;
    double f1 = f1_of(tp, fp, total_pos - tp);
    if (f1 > best_f1) { best_f1 = f1; best_thr = thr; }
    size_t i = 0;
    while (i < scored.size()) {
        const double s = scored[i].first;
        while (i < scored.size() && scored[i].first == s) {
            scored[i].second ? --tp : --fp;
            ++i;
        }
        thr = i < scored.size() ? 0.5 * (s + scored[i].first) : s + 1e-9;
        f1 = f1_of(tp, fp, total_pos - tp);
        if (f1 > best_f1) { best_f1 = f1; best_thr = thr; }
    }
    return best_thr;
}

}  // namespace kpalign
