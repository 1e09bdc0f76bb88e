// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#include <catch2/catch_amalgamated.hpp>

#include "kpalign/sim.hpp"

using namespace kpalign;

namespace {

SimConfig small_cfg(uint64_t seed) {
    SimConfig cfg;
    cfg.n_items = 60;
    cfg.n_keyphrases = 30;
    cfg.n_topics = 3;
    cfg.auction_rounds = 8;
    cfg.seed = seed;
    return cfg;
}

// Two same-topic items competing for one keyphrase; the minimal world for
// position-decay measurements.
World two_item_world(double decay, int rounds, uint64_t seed) {
    World w;
    w.cfg = SimConfig{};
    w.cfg.n_topics = 2;
    w.cfg.search_noise = 0.0;
    w.cfg.position_decay = decay;
    w.cfg.auction_rounds = rounds;
    w.cfg.seed = seed;
    w.topic_names = {"audio", "shoe"};
    w.items = {{0, "audiomax audiopro", 0, "audio"}, {1, "audiolite audiocore", 0, "audio"}};
    w.keyphrases = {{0, "audiomax"}};
    w.gt.item_topic = {0, 0};
    w.gt.kp_topic = {0};
    w.gt.item_mix = {{1.0, 0.0}, {1.0, 0.0}};
    w.gt.kp_mix = {{1.0, 0.0}};
    w.gt.item_disc_tokens = {token_set(w.items[0].title), token_set(w.items[1].title)};
    w.gt.kp_tokens = {{"audiomax"}};
    w.item_index = {{0, 0}, {1, 1}};
    w.kp_index = {{0, 0}};
    return w;
}

bool records_equal(const std::vector<ClickLogRecord>& a, const std::vector<ClickLogRecord>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].item_id != b[i].item_id || a[i].keyphrase_id != b[i].keyphrase_id ||
            a[i].impressions != b[i].impressions || a[i].clicks != b[i].clicks || a[i].sales != b[i].sales)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("config validation rejects out-of-range worlds") {
    SimConfig cfg;
    cfg.n_topics = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.n_topics = 99;  // beyond the token pool
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.search_noise = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.position_decay = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("gen_catalog is deterministic and well-formed") {
    SimConfig cfg = small_cfg(1);
    cfg.n_items = 10;
    cfg.n_keyphrases = 10;
    cfg.n_topics = 2;
    auto w1 = gen_catalog(cfg);
    auto w2 = gen_catalog(cfg);
    REQUIRE(w1.items.size() == 10);
    for (size_t i = 0; i < w1.items.size(); ++i) {
        CHECK(w1.items[i].title == w2.items[i].title);
        CHECK_FALSE(w1.items[i].title.empty());
        CHECK(std::find(w1.topic_names.begin(), w1.topic_names.end(), w1.items[i].category_name) !=
              w1.topic_names.end());
    }
    for (size_t j = 0; j < w1.keyphrases.size(); ++j) {
        CHECK(w1.keyphrases[j].text == w2.keyphrases[j].text);
        CHECK(!tokenize(w1.keyphrases[j].text).empty());
    }
}

TEST_CASE("every generated world has relevant, irrelevant, and zero-overlap-relevant pairs") {
    for (uint64_t seed : {1ULL, 7ULL, 42ULL}) {
        auto w = gen_catalog(small_cfg(seed));
        bool any_rel = false, any_irrel = false, any_rel_zero_jaccard = false;
        for (size_t i = 0; i < w.items.size(); ++i) {
            const auto title = token_set(w.items[i].title);
            for (size_t j = 0; j < w.keyphrases.size(); ++j) {
                const bool rel = w.gt.relevant(i, j);
                any_rel = any_rel || rel;
                any_irrel = any_irrel || !rel;
                if (rel && jaccard_index(title, token_set(w.keyphrases[j].text)) == 0.0)
                    any_rel_zero_jaccard = true;
            }
        }
        CHECK(any_rel);
        CHECK(any_irrel);
        CHECK(any_rel_zero_jaccard);
    }
}

TEST_CASE("search oracle obeys its noise limits and is consistent per pair") {
    auto cfg = small_cfg(5);
    cfg.search_noise = 0.0;
    auto w0 = gen_catalog(cfg);
    for (size_t i = 0; i < 20; ++i)
        CHECK(w0.search_oracle(static_cast<int64_t>(i), 3) == (w0.gt_relevant(static_cast<int64_t>(i), 3) ? 1 : 0));

    cfg.search_noise = 1.0;
    auto w1 = gen_catalog(cfg);
    for (size_t i = 0; i < 20; ++i)
        CHECK(w1.search_oracle(static_cast<int64_t>(i), 3) == (w1.gt_relevant(static_cast<int64_t>(i), 3) ? 0 : 1));

    cfg.search_noise = 0.4;
    auto w = gen_catalog(cfg);
    for (int rep = 0; rep < 5; ++rep) CHECK(w.search_oracle(4, 9) == w.search_oracle(4, 9));

    CHECK_THROWS_AS(w.search_oracle(10000, 0), DataError);
    CHECK_THROWS_AS(w.search_oracle(0, 10000), DataError);
}

TEST_CASE("traffic only logs oracle-passing pairs and conserves counts") {
    auto cfg = small_cfg(11);
    auto w = gen_catalog(cfg);
    auto pairs = gen_advertised_pairs(w);
    auto traffic = simulate_traffic(w, pairs, cfg);
    REQUIRE(!traffic.records.empty());
    int64_t total_clicks = 0, total_imps = 0;
    for (const auto& r : traffic.records) {
        CHECK(w.search_oracle(r.item_id, r.keyphrase_id) == 1);
        CHECK(r.clicks <= r.impressions);
        CHECK(r.sales <= r.clicks);
        total_clicks += r.clicks;
        total_imps += r.impressions;
    }
    CHECK(total_clicks <= total_imps);

    // no record exists for any advertised pair the oracle rejected
    std::unordered_set<PairKey, PairKeyHash> logged;
    for (const auto& r : traffic.records) logged.insert({r.item_id, r.keyphrase_id});
    size_t rejected = 0;
    for (const auto& p : pairs) {
        if (w.search_oracle(p.item_id, p.keyphrase_id) == 0) {
            ++rejected;
            CHECK_FALSE(logged.count(p));
        }
    }
    CHECK(rejected > 0);
}

TEST_CASE("simulation is bit-reproducible for a fixed config and seed") {
    auto cfg = small_cfg(23);
    auto w1 = gen_catalog(cfg);
    auto w2 = gen_catalog(cfg);
    auto t1 = simulate_traffic(w1, gen_advertised_pairs(w1), cfg);
    auto t2 = simulate_traffic(w2, gen_advertised_pairs(w2), cfg);
    CHECK(records_equal(t1.records, t2.records));

    auto j1 = derive_judgment_dataset(w1, gen_advertised_pairs(w1), t1, cfg);
    auto j2 = derive_judgment_dataset(w2, gen_advertised_pairs(w2), t2, cfg);
    REQUIRE(j1.train.size() == j2.train.size());
    for (size_t i = 0; i < j1.train.size(); ++i) {
        CHECK(j1.train[i].item_id == j2.train[i].item_id);
        CHECK(j1.train[i].label == j2.train[i].label);
    }
}

TEST_CASE("position decay halves the runner-up clicks when gamma is one half") {
    auto w = two_item_world(0.5, 10000, 3);
    auto traffic = simulate_traffic(w, {{0, 0}, {1, 0}}, w.cfg);
    REQUIRE(traffic.rank_ctr.size() == 2);
    const double r0 = traffic.rank_ctr[0].ctr();
    const double r1 = traffic.rank_ctr[1].ctr();
    CHECK(r1 / r0 == Catch::Approx(0.5).epsilon(0.10));
}

TEST_CASE("rank has no effect when decay is disabled") {
    auto w = two_item_world(1.0, 10000, 4);
    auto traffic = simulate_traffic(w, {{0, 0}, {1, 0}}, w.cfg);
    REQUIRE(traffic.rank_ctr.size() == 2);
    CHECK(traffic.rank_ctr[1].ctr() / traffic.rank_ctr[0].ctr() == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("click dataset filters follow the CTR and impression floors") {
    SimConfig cfg;  // min_clicks 1, min_impressions 30, min_ctr 0.05
    std::vector<ClickLogRecord> log = {
        {1, 1, 1, 1, 0},      // 1 impression, 1 click: accident, excluded
        {1, 2, 1000, 1, 0},   // low CTR, excluded
        {1, 3, 100, 10, 2},   // CTR 0.1 over 100 impressions: included
        {1, 4, 29, 10, 0},    // under the impression floor, excluded
        {1, 5, 40, 0, 0},     // no clicks, excluded
    };
    auto kept = derive_click_dataset(log, cfg);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].keyphrase_id == 3);
}

TEST_CASE("judgment dataset is stratified with a floor and split disjointly") {
    auto cfg = small_cfg(31);
    cfg.judgment_total = 150;
    cfg.judgment_floor_per_topic = 15;
    auto w = gen_catalog(cfg);
    auto pairs = gen_advertised_pairs(w);
    auto traffic = simulate_traffic(w, pairs, cfg);
    auto ds = derive_judgment_dataset(w, pairs, traffic, cfg);

    std::vector<size_t> per_topic(static_cast<size_t>(cfg.n_topics), 0);
    bool saw_pos = false, saw_neg = false;
    std::unordered_set<PairKey, PairKeyHash> train_keys;
    for (const auto& j : ds.train) {
        ++per_topic[static_cast<size_t>(w.gt.item_topic[w.item_idx(j.item_id)])];
        saw_pos = saw_pos || j.label == 1;
        saw_neg = saw_neg || j.label == 0;
        train_keys.insert({j.item_id, j.keyphrase_id});
    }
    for (const auto& j : ds.eval) {
        ++per_topic[static_cast<size_t>(w.gt.item_topic[w.item_idx(j.item_id)])];
        saw_pos = saw_pos || j.label == 1;
        saw_neg = saw_neg || j.label == 0;
        CHECK_FALSE(train_keys.count({j.item_id, j.keyphrase_id}));
    }
    CHECK(saw_pos);
    CHECK(saw_neg);
    for (size_t t = 0; t < per_topic.size(); ++t) CHECK(per_topic[t] >= 15);
}

TEST_CASE("bias report: click data never covers the oracle-rejected region") {
    for (uint64_t seed : {2ULL, 9ULL, 77ULL}) {
        auto cfg = small_cfg(seed);
        auto w = gen_catalog(cfg);
        auto pairs = gen_advertised_pairs(w);
        auto traffic = simulate_traffic(w, pairs, cfg);
        auto clicks = derive_click_dataset(traffic.records, cfg);
        auto rep = measure_middleman_bias(clicks, w, traffic);
        CHECK(rep.oracle_fail_in_click == 0);
        CHECK(rep.oracle_fail_fraction == 0.0);
        CHECK(rep.click_in_irrelevant_region == 0);
        CHECK(rep.irrelevant_region_coverage == 0.0);
        CHECK(rep.oracle_irrelevant_region > 0);
    }
}

TEST_CASE("rank-vs-CTR curve is flat without decay and decreasing with it") {
    auto flat_world = two_item_world(1.0, 5000, 8);
    auto flat = measure_middleman_bias({}, flat_world, simulate_traffic(flat_world, {{0, 0}, {1, 0}}, flat_world.cfg));
    REQUIRE(flat.rank_ctr.size() == 2);
    CHECK(flat.rank_ctr[1].ctr() == Catch::Approx(flat.rank_ctr[0].ctr()).epsilon(0.05));

    auto cfg = small_cfg(12);
    cfg.position_decay = 0.5;
    cfg.search_noise = 0.0;
    cfg.auction_rounds = 40;
    auto w = gen_catalog(cfg);
    auto traffic = simulate_traffic(w, gen_advertised_pairs(w), cfg);
    auto rep = measure_middleman_bias({}, w, traffic);
    REQUIRE(rep.rank_ctr.size() >= 4);
    for (size_t r = 1; r < 4; ++r) CHECK(rep.rank_ctr[r].ctr() < rep.rank_ctr[r - 1].ctr());
}

TEST_CASE("ground-truth-relevant pairs can end up with zero clicks") {
    auto cfg = small_cfg(19);
    cfg.search_noise = 0.0;
    auto w = gen_catalog(cfg);
    auto pairs = gen_advertised_pairs(w);
    auto traffic = simulate_traffic(w, pairs, cfg);
    std::unordered_map<PairKey, const ClickLogRecord*, PairKeyHash> by_pair;
    for (const auto& r : traffic.records) by_pair[{r.item_id, r.keyphrase_id}] = &r;
    bool starving_relevant = false;
    for (const auto& item : w.items) {
        for (const auto& kp : w.keyphrases) {
            if (!w.gt_relevant(item.item_id, kp.keyphrase_id)) continue;
            auto it = by_pair.find({item.item_id, kp.keyphrase_id});
            if (it == by_pair.end() || it->second->clicks == 0) starving_relevant = true;
        }
    }
    CHECK(starving_relevant);
}
