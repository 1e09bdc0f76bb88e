// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#include <algorithm>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "kpalign/jaccard.hpp"

using namespace kpalign;

namespace {

// Independent oracle: sorted std::set algebra instead of hashed counting.
double jaccard_brute(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::vector<std::string> inter, uni;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
    std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(uni));
    if (uni.empty()) return 0.0;
    return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

TokenSet make_set(std::initializer_list<const char*> toks) {
    TokenSet s;
    for (auto* t : toks) s.insert(t);
    return s;
}

}  // namespace

TEST_CASE("jaccard_index matches hand-computed values") {
    CHECK(jaccard_index(make_set({"red", "nike", "shoes", "size", "9"}), make_set({"nike", "shoes"})) ==
          Catch::Approx(0.4));
    auto a = make_set({"x", "y", "z"});
    CHECK(jaccard_index(a, a) == 1.0);
    CHECK(jaccard_index(make_set({"a"}), make_set({"b"})) == 0.0);
    CHECK(jaccard_index({}, {}) == 0.0);
}

TEST_CASE("jaccard_filter applies the threshold over title tokens") {
    ItemDoc item{1, "red nike shoes size 9", 0, "Footwear"};
    std::vector<Keyphrase> kps = {{10, "nike shoes"}, {11, "nike"}, {12, "totally unrelated phrase"}};
    JaccardConfig cfg;
    cfg.threshold = 0.3;
    auto res = jaccard_filter(item, kps, cfg);
    REQUIRE(res.size() == 3);
    CHECK(res[0].keyphrase_id == 10);
    CHECK(res[0].score == Catch::Approx(0.4));
    CHECK(res[0].pass);
    // single token contained in a 5-token title: 1/5, penalized below threshold
    CHECK(res[1].score == Catch::Approx(0.2));
    CHECK_FALSE(res[1].pass);
    CHECK_FALSE(res[2].pass);

    cfg.threshold = 0.0;
    for (const auto& r : jaccard_filter(item, kps, cfg)) CHECK(r.pass);

    cfg.threshold = 1.5;
    CHECK_THROWS_AS(jaccard_filter(item, kps, cfg), ConfigError);
}

TEST_CASE("jaccard_filter can include category tokens") {
    ItemDoc item{1, "red runner", 0, "nike shoes"};
    std::vector<Keyphrase> kps = {{10, "nike shoes"}};
    JaccardConfig cfg;
    cfg.threshold = 0.4;
    CHECK_FALSE(jaccard_filter(item, kps, cfg)[0].pass);
    cfg.use_category_tokens = true;
    auto res = jaccard_filter(item, kps, cfg);
    CHECK(res[0].score == Catch::Approx(0.5));  // {red,runner,nike,shoes} vs {nike,shoes}
    CHECK(res[0].pass);
}

TEST_CASE("jaccard_index is symmetric and agrees with the brute-force oracle") {
    Rng rng(123);
    const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> va, vb;
        const int na = static_cast<int>(rng.uniform_int(0, 6));
        const int nb = static_cast<int>(rng.uniform_int(0, 6));
        for (int i = 0; i < na; ++i) va.push_back(pool[rng.uniform_index(pool.size())]);
        for (int i = 0; i < nb; ++i) vb.push_back(pool[rng.uniform_index(pool.size())]);
        TokenSet sa(va.begin(), va.end()), sb(vb.begin(), vb.end());
        const double j = jaccard_index(sa, sb);
        CHECK(j == jaccard_index(sb, sa));
        CHECK(j == Catch::Approx(jaccard_brute(va, vb)));
    }
}

TEST_CASE("contained keyphrases score |kp|/|title|, increasing with keyphrase length") {
    // the short-keyphrase penalty in testable form
    ItemDoc item{1, "alpha beta gamma delta epsilon", 0, "cat"};
    const auto title = token_set(item.title);
    double prev = 0.0;
    std::vector<std::string> kp_tokens;
    for (const auto& tok : std::vector<std::string>{"alpha", "beta", "gamma", "delta"}) {
        kp_tokens.push_back(tok);
        TokenSet kp(kp_tokens.begin(), kp_tokens.end());
        const double j = jaccard_index(title, kp);
        CHECK(j == Catch::Approx(static_cast<double>(kp_tokens.size()) / 5.0));
        CHECK(j > prev);
        prev = j;
    }
}
