// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#include <catch2/catch_amalgamated.hpp>

#include "kpalign/eval.hpp"

using namespace kpalign;

namespace {

std::vector<RelevanceJudgment> judgments_for(const std::vector<PairPrediction>& preds, Rng& rng) {
    std::vector<RelevanceJudgment> out;
    for (const auto& p : preds) out.push_back({p.item_id, p.keyphrase_id, rng.bernoulli(0.5) ? 1 : 0});
    return out;
}

// Brute-force recount: per-pair linear scan instead of hashed join.
ConfusionCounts confusion_brute(const std::vector<PairPrediction>& preds,
                                const std::vector<RelevanceJudgment>& judgments) {
    ConfusionCounts c;
    for (const auto& p : preds) {
        for (const auto& j : judgments) {
            if (j.item_id == p.item_id && j.keyphrase_id == p.keyphrase_id) {
                if (p.pass && j.label == 1) ++c.tp;
                if (p.pass && j.label == 0) ++c.fp;
                if (!p.pass && j.label == 1) ++c.fn;
                if (!p.pass && j.label == 0) ++c.tn;
                break;
            }
        }
    }
    return c;
}

}  // namespace

TEST_CASE("confusion counts a hand-built six-pair case") {
    std::vector<RelevanceJudgment> judgments = {
        {1, 1, 1}, {1, 2, 1}, {1, 3, 1}, {2, 1, 0}, {2, 2, 1}, {2, 3, 0},
    };
    std::vector<PairPrediction> preds = {
        {1, 1, 0.9, true},  {1, 2, 0.8, true},  {1, 3, 0.7, true},  // 3 correct passes
        {2, 1, 0.6, true},                                          // 1 wrong pass
        {2, 2, 0.2, false},                                         // 1 miss
        {2, 3, 0.1, false},                                         // 1 correct reject
    };
    auto c = confusion(preds, judgments);
    CHECK(c.tp == 3);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);
    CHECK(c.tn == 1);
    CHECK(c.total() == 6);
}

TEST_CASE("perfect and inverted predictors hit the degenerate corners") {
    Rng rng(3);
    std::vector<PairPrediction> preds;
    for (int i = 0; i < 50; ++i) preds.push_back({i, i * 7, 0.0, false});
    auto judgments = judgments_for(preds, rng);
    for (size_t i = 0; i < preds.size(); ++i) preds[i].pass = judgments[i].label == 1;
    auto perfect = confusion(preds, judgments);
    CHECK(perfect.fp == 0);
    CHECK(perfect.fn == 0);
    for (auto& p : preds) p.pass = !p.pass;
    auto inverted = confusion(preds, judgments);
    CHECK(inverted.tp == 0);
    CHECK(inverted.tn == 0);
}

TEST_CASE("confusion raises on predictions without judgments, naming the pairs") {
    std::vector<RelevanceJudgment> judgments = {{1, 1, 1}};
    std::vector<PairPrediction> preds = {{1, 1, 0.9, true}, {5, 9, 0.1, false}};
    CHECK_THROWS_WITH(confusion(preds, judgments), Catch::Matchers::ContainsSubstring("(5,9)"));
}

TEST_CASE("prf1 arithmetic") {
    auto r = prf1({3, 1, 1, 1});
    CHECK(r.precision == Catch::Approx(0.75));
    CHECK(r.recall == Catch::Approx(0.75));
    CHECK(r.f1 == Catch::Approx(0.75));

    auto degenerate = prf1({0, 0, 10, 20});  // all-negative predictor
    CHECK(degenerate.precision == 0.0);
    CHECK(degenerate.recall == 0.0);
    CHECK(degenerate.f1 == 0.0);
}

TEST_CASE("prf1 over confusion matches brute-force recounts on random instances") {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<PairPrediction> preds;
        const int n = static_cast<int>(rng.uniform_int(1, 40));
        for (int i = 0; i < n; ++i) {
            const double score = rng.uniform();
            preds.push_back({static_cast<int64_t>(rng.uniform_int(0, 15)),
                             static_cast<int64_t>(rng.uniform_int(0, 15)), score, score >= 0.5});
        }
        // de-dup pairs so the join is well-defined
        std::sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) {
            return std::pair(a.item_id, a.keyphrase_id) < std::pair(b.item_id, b.keyphrase_id);
        });
        preds.erase(std::unique(preds.begin(), preds.end(),
                                [](const auto& a, const auto& b) {
                                    return a.item_id == b.item_id && a.keyphrase_id == b.keyphrase_id;
                                }),
                    preds.end());
        auto judgments = judgments_for(preds, rng);
        auto fast = confusion(preds, judgments);
        auto brute = confusion_brute(preds, judgments);
        CHECK(fast.tp == brute.tp);
        CHECK(fast.fp == brute.fp);
        CHECK(fast.fn == brute.fn);
        CHECK(fast.tn == brute.tn);
        auto rf = prf1(fast);
        auto rb = prf1(brute);
        CHECK(rf.precision == rb.precision);
        CHECK(rf.recall == rb.recall);
        CHECK(rf.f1 == rb.f1);
    }
}

TEST_CASE("raising the threshold never increases fp nor decreases fn") {
    Rng rng(314);
    std::vector<PairPrediction> preds;
    for (int i = 0; i < 200; ++i) preds.push_back({i, i, rng.uniform(), false});
    auto judgments = judgments_for(preds, rng);
    int64_t prev_fp = -1, prev_fn = -1;
    bool first = true;
    for (double thr = 0.0; thr <= 1.01; thr += 0.1) {
        for (auto& p : preds) p.pass = p.score >= thr;
        auto c = confusion(preds, judgments);
        if (!first) {
            CHECK(c.fp <= prev_fp);
            CHECK(c.fn >= prev_fn);
        }
        prev_fp = c.fp;
        prev_fn = c.fn;
        first = false;
    }
}

TEST_CASE("fn_length_breakdown buckets false negatives by keyphrase token count") {
    std::vector<Keyphrase> kps = {{1, "nike"}, {2, "red shoes"}, {3, "alpha beta gamma"}};
    std::vector<RelevanceJudgment> judgments = {{10, 1, 1}, {10, 2, 1}, {10, 3, 0}, {11, 1, 1}};
    std::vector<PairPrediction> preds = {
        {10, 1, 0.1, false},  // fn, length 1
        {10, 2, 0.2, false},  // fn, length 2
        {10, 3, 0.9, true},   // fp, not counted
        {11, 1, 0.2, false},  // fn, length 1
    };
    auto buckets = fn_length_breakdown(preds, judgments, kps);
    CHECK(buckets.at(1) == 2);
    CHECK(buckets.at(2) == 1);
    int64_t total = 0;
    for (auto& [len, n] : buckets) total += n;
    CHECK(total == confusion(preds, judgments).fn);

    // no false negatives -> empty map
    std::vector<PairPrediction> all_pass = {{10, 1, 0.9, true}, {10, 2, 0.9, true}};
    CHECK(fn_length_breakdown(all_pass, judgments, kps).empty());
}

TEST_CASE("best_f1_threshold picks a separating point") {
    std::vector<std::pair<double, int>> scored = {{0.1, 0}, {0.2, 0}, {0.6, 1}, {0.9, 1}};
    const double thr = best_f1_threshold(scored);
    CHECK(thr > 0.2);
    CHECK(thr <= 0.6);
    CHECK(best_f1_threshold({}) == 0.5);
}
