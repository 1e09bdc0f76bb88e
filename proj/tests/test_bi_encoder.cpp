// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "kpalign/bi_encoder.hpp"
#include "kpalign/eval.hpp"

using namespace kpalign;

namespace {

TokenSeq seq(std::initializer_list<int> ids) { return TokenSeq{std::vector<int>(ids)}; }

// Fresh model whose embedding rows are exactly the given vectors.
BiEncoderModel model_with_rows(const std::vector<std::vector<double>>& rows, BiObjective obj) {
    const int d = static_cast<int>(rows[0].size());
    auto m = BiEncoderModel::init(static_cast<int>(rows.size()), d, obj, 1);
    for (size_t r = 0; r < rows.size(); ++r)
        for (int j = 0; j < d; ++j) m.params()[r * static_cast<size_t>(d) + static_cast<size_t>(j)] = rows[r][static_cast<size_t>(j)];
    return m;
}

std::vector<BiLabeledPair> random_labeled_batch(int vocab, int n, Rng& rng) {
    std::vector<BiLabeledPair> batch;
    for (int i = 0; i < n; ++i) {
        BiLabeledPair ex;
        const int li = static_cast<int>(rng.uniform_int(1, 4));
        const int lk = static_cast<int>(rng.uniform_int(1, 3));
        for (int k = 0; k < li; ++k) ex.item.ids.push_back(static_cast<int>(rng.uniform_int(4, vocab - 1)));
        for (int k = 0; k < lk; ++k) ex.keyphrase.ids.push_back(static_cast<int>(rng.uniform_int(4, vocab - 1)));
        ex.label = rng.bernoulli(0.5) ? 1 : 0;
        batch.push_back(std::move(ex));
    }
    return batch;
}

}  // namespace

TEST_CASE("encode pools token embeddings and normalizes") {
    auto m = BiEncoderModel::init(10, 8, BiObjective::kContrastive, 3);
    auto u1 = m.encode(seq({5}));
    CHECK(l2_norm(u1.data(), u1.size()) == Catch::Approx(1.0).margin(1e-6));
    auto u2 = m.encode(seq({5, 5}));
    for (size_t j = 0; j < u1.size(); ++j) CHECK(u1[j] == Catch::Approx(u2[j]).margin(1e-12));
    CHECK(m.encode(seq({5, 7})) == m.encode(seq({5, 7})));
    CHECK_THROWS_AS(m.encode(seq({})), DataError);
    CHECK_THROWS_AS(m.encode(seq({99})), DataError);
}

TEST_CASE("score_pair maps cosine to [0,1] in contrastive mode") {
    auto m = BiEncoderModel::init(10, 8, BiObjective::kContrastive, 3);
    CHECK(m.score_pair(seq({5, 6}), seq({5, 6})) == Catch::Approx(1.0).margin(1e-6));

    // orthogonal embedding rows -> cosine 0 -> midpoint
    auto ortho = model_with_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}, {1, 0}, {0, 1}}, BiObjective::kContrastive);
    CHECK(ortho.score_pair(seq({4}), seq({5})) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("softmax head produces a normalized distribution") {
    auto m = BiEncoderModel::init(12, 6, BiObjective::kSoftmax, 9);
    auto u = m.encode(seq({4, 5}));
    auto v = m.encode(seq({6}));
    double z[2];
    m.head_logits(u.data(), v.data(), z);
    softmax_row(z, 2);
    CHECK(z[0] + z[1] == Catch::Approx(1.0).margin(1e-12));
    const double p1 = m.score_pair(seq({4, 5}), seq({6}));
    CHECK(p1 == Catch::Approx(z[1]).margin(1e-12));
    CHECK(p1 > 0.0);
    CHECK(p1 < 1.0);
}

TEST_CASE("contrastive pair losses vanish on matched and well-separated pairs") {
    BiTrainConfig cfg;
    cfg.objective = BiObjective::kContrastive;
    cfg.margin = 0.5;

    auto m = BiEncoderModel::init(10, 8, BiObjective::kContrastive, 3);
    std::vector<BiLabeledPair> same = {{seq({5, 6}), seq({5, 6}), 1}};
    CHECK(bi_loss_and_grad(m, same, cfg, nullptr) == Catch::Approx(0.0).margin(1e-12));

    // orthogonal rows: D = sqrt(2) > margin, hinge inactive
    auto ortho = model_with_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}, {1, 0}, {0, 1}}, BiObjective::kContrastive);
    std::vector<BiLabeledPair> apart = {{seq({4}), seq({5}), 0}};
    CHECK(bi_loss_and_grad(ortho, apart, cfg, nullptr) == Catch::Approx(0.0).margin(1e-12));

    std::vector<double> grad(ortho.param_count(), 0.0);
    bi_loss_and_grad(ortho, apart, cfg, &grad);
    for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("gradient check passes for all three objectives across seeds") {
    for (uint64_t s = 1; s <= 10; ++s) {
        Rng rng(s * 101);
        BiTrainConfig cfg;

        cfg.objective = BiObjective::kContrastive;
        auto mc = BiEncoderModel::init(24, 12, cfg.objective, s);
        CHECK(grad_check_bi(mc, random_labeled_batch(24, 8, rng), cfg) < 1e-4);

        cfg.objective = BiObjective::kSoftmax;
        auto ms = BiEncoderModel::init(24, 12, cfg.objective, s);
        CHECK(grad_check_bi(ms, random_labeled_batch(24, 8, rng), cfg) < 1e-4);

        cfg.objective = BiObjective::kIrns;
        auto mi = BiEncoderModel::init(24, 12, cfg.objective, s);
        auto labeled = random_labeled_batch(24, 6, rng);
        std::vector<BiPositivePair> pos;
        for (auto& ex : labeled) pos.push_back({ex.item, ex.keyphrase});
        CHECK(grad_check_bi(mi, pos, cfg) < 1e-4);
    }
}

TEST_CASE("a gradient scaled by 2 is flagged near the symmetric bound of 1/3") {
    Rng rng(77);
    BiTrainConfig cfg;
    cfg.objective = BiObjective::kContrastive;
    auto m = BiEncoderModel::init(16, 8, cfg.objective, 5);
    auto batch = random_labeled_batch(16, 6, rng);
    std::vector<double> analytic(m.param_count(), 0.0);
    bi_loss_and_grad(m, batch, cfg, &analytic);

    const double eps = 1e-6;
    double max_err = 0.0;
    auto work = m;
    for (size_t i = 0; i < work.param_count(); ++i) {
        const double saved = work.params()[i];
        work.params()[i] = saved + eps;
        const double lp = bi_loss_and_grad(work, batch, cfg, nullptr);
        work.params()[i] = saved - eps;
        const double lm = bi_loss_and_grad(work, batch, cfg, nullptr);
        work.params()[i] = saved;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double doubled = 2.0 * analytic[i];
        max_err = std::max(max_err, std::fabs(doubled - numeric) /
                                        std::max(1e-8, std::fabs(doubled) + std::fabs(numeric)));
    }
    CHECK(max_err == Catch::Approx(1.0 / 3.0).margin(0.01));
}

TEST_CASE("irns loss at random initialization is close to ln(batch_size)") {
    BiTrainConfig cfg;
    cfg.objective = BiObjective::kIrns;
    cfg.temperature = 0.2;
    const int b = 32;
    Rng rng(2024);
    auto m = BiEncoderModel::init(512, 256, cfg.objective, 11);
    std::vector<BiPositivePair> batch;
    for (int i = 0; i < b; ++i) {
        BiPositivePair ex;
        for (int k = 0; k < 3; ++k) ex.item.ids.push_back(static_cast<int>(rng.uniform_int(4, 511)));
        for (int k = 0; k < 2; ++k) ex.keyphrase.ids.push_back(static_cast<int>(rng.uniform_int(4, 511)));
        batch.push_back(std::move(ex));
    }
    const double loss = bi_loss_and_grad(m, batch, cfg, nullptr);
    CHECK(loss == Catch::Approx(std::log(static_cast<double>(b))).epsilon(0.10));
}

TEST_CASE("irns consumes positives only and objectives reject mismatched data") {
    BiTrainConfig cfg;
    cfg.objective = BiObjective::kIrns;
    cfg.epochs = 1;
    auto m = BiEncoderModel::init(16, 8, BiObjective::kIrns, 1);
    Rng rng(5);
    auto labeled = random_labeled_batch(16, 8, rng);
    CHECK_THROWS_AS(train_bi(m, labeled, cfg), ConfigError);

    std::vector<BiPositivePair> pos;
    for (auto& ex : labeled) pos.push_back({ex.item, ex.keyphrase});
    BiTrainConfig ccfg;
    ccfg.objective = BiObjective::kContrastive;
    auto mc = BiEncoderModel::init(16, 8, BiObjective::kContrastive, 1);
    CHECK_THROWS_AS(bi_loss_and_grad(mc, pos, ccfg, nullptr), ConfigError);

    // positives train fine under irns
    cfg.batch_size = 4;
    auto trace = train_bi(m, pos, cfg);
    CHECK(trace.epoch_loss.size() == 1);
    CHECK(std::isfinite(trace.epoch_loss[0]));
}

TEST_CASE("contrastive training separates a synthetic world and calibrates") {
    // two disjoint token clusters; pairs within a cluster are positive
    const int vocab = 44;  // 4 specials + 2 clusters of 20
    Rng rng(31);
    auto sample_seq = [&](int cluster, int len) {
        TokenSeq s;
        for (int k = 0; k < len; ++k)
            s.ids.push_back(4 + cluster * 20 + static_cast<int>(rng.uniform_index(20)));
        return s;
    };
    std::vector<BiLabeledPair> data;
    for (int i = 0; i < 200; ++i) {
        const int ci = static_cast<int>(rng.uniform_index(2));
        const bool pos = rng.bernoulli(0.5);
        const int ck = pos ? ci : 1 - ci;
        data.push_back({sample_seq(ci, 4), sample_seq(ck, 2), pos ? 1 : 0});
    }
    BiTrainConfig cfg;
    cfg.objective = BiObjective::kContrastive;
    cfg.epochs = 8;
    cfg.lr = 0.05;
    cfg.batch_size = 16;
    cfg.seed = 9;
    auto m = BiEncoderModel::init(vocab, 16, cfg.objective, 9);
    auto trace = train_bi(m, data, cfg);
    REQUIRE(trace.epoch_loss.size() == 8);
    for (size_t e = 2; e < trace.epoch_loss.size(); ++e)
        CHECK(trace.epoch_loss[e] <= trace.epoch_loss[e - 1] * 1.05);

    std::vector<std::pair<double, int>> scored;
    for (const auto& ex : data) scored.emplace_back(m.score_pair(ex.item, ex.keyphrase), ex.label);
    const double thr = best_f1_threshold(scored);
    int64_t tp = 0, fp = 0, fn = 0;
    for (const auto& [s, y] : scored) {
        const bool pass = s >= thr;
        tp += pass && y;
        fp += pass && !y;
        fn += !pass && y;
    }
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
    CHECK(2.0 * p * r / (p + r) >= 0.95);
}

TEST_CASE("scores stay in [0,1] and are symmetric under side swap") {
    Rng rng(88);
    for (uint64_t s = 0; s < 5; ++s) {
        auto m = BiEncoderModel::init(20, 8, BiObjective::kContrastive, s);
        for (int t = 0; t < 20; ++t) {
            TokenSeq a, b;
            for (int k = 0; k < 3; ++k) a.ids.push_back(static_cast<int>(rng.uniform_int(4, 19)));
            for (int k = 0; k < 2; ++k) b.ids.push_back(static_cast<int>(rng.uniform_int(4, 19)));
            const double ab = m.score_pair(a, b);
            CHECK(ab >= 0.0);
            CHECK(ab <= 1.0);
            CHECK(ab == Catch::Approx(m.score_pair(b, a)).margin(1e-12));
        }
    }
}

TEST_CASE("training diverges loudly under an absurd learning rate") {
    Rng rng(17);
    auto data = random_labeled_batch(16, 32, rng);
    BiTrainConfig cfg;
    cfg.objective = BiObjective::kSoftmax;
    cfg.epochs = 30;
    cfg.lr = 1e12;
    auto m = BiEncoderModel::init(16, 8, cfg.objective, 2);
    CHECK_THROWS_AS(train_bi(m, data, cfg), DataError);
}

TEST_CASE("train config validation") {
    BiTrainConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.margin = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.temperature = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
