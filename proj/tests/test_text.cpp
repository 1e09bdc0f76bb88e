// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#include <catch2/catch_amalgamated.hpp>

#include "kpalign/text.hpp"

using namespace kpalign;

TEST_CASE("tokenize lowercases and splits on whitespace/punctuation") {
    CHECK(tokenize("Red Nike Shoes, Size 9") == std::vector<std::string>{"red", "nike", "shoes", "size", "9"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("nike  nike") == std::vector<std::string>{"nike", "nike"});
    CHECK(tokenize("  ,,!  ").empty());
    CHECK(tokenize("a-b_c") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("tokenize handles unicode separators and keeps non-ascii letters") {
    // em dash (U+2014) and NBSP (U+00A0) separate; accented letters survive
    CHECK(tokenize("caf\xc3\xa9\xe2\x80\x94" "bar") == std::vector<std::string>{"caf\xc3\xa9", "bar"});
    CHECK(tokenize("a\xc2\xa0" "b") == std::vector<std::string>{"a", "b"});
}

TEST_CASE("tokenize is idempotent on its own joined output") {
    Rng rng(42);
    const std::vector<std::string> words = {"Red", "NIKE", "shoes,", "size-9", "caf\xc3\xa9", "x", "42"};
    for (int trial = 0; trial < 50; ++trial) {
        std::string text;
        const int n = static_cast<int>(rng.uniform_int(0, 8));
        for (int i = 0; i < n; ++i) {
            if (i) text += ' ';
            text += words[rng.uniform_index(words.size())];
        }
        auto once = tokenize(text);
        std::string joined;
        for (size_t i = 0; i < once.size(); ++i) {
            if (i) joined += ' ';
            joined += once[i];
        }
        CHECK(tokenize(joined) == once);
    }
}

TEST_CASE("build_vocab orders by frequency then lexicographic after specials") {
    auto v = build_vocab({"a b", "a"}, 1);
    REQUIRE(v.size() == 6);
    CHECK(v.token(Vocab::kPadId) == "[PAD]");
    CHECK(v.token(Vocab::kUnkId) == "[UNK]");
    CHECK(v.token(Vocab::kClsId) == "[CLS]");
    CHECK(v.token(Vocab::kSepId) == "[SEP]");
    CHECK(v.id("a") == 4);  // freq 2 beats freq 1
    CHECK(v.id("b") == 5);
}

TEST_CASE("build_vocab honors min_freq and the empty corpus") {
    auto v = build_vocab({"a b", "a"}, 2);
    CHECK(v.contains("a"));
    CHECK_FALSE(v.contains("b"));
    CHECK(v.id("b") == Vocab::kUnkId);

    auto empty = build_vocab({}, 1);
    CHECK(empty.size() == 4);

    CHECK_THROWS_AS(build_vocab({"a"}, 0), ConfigError);
}

TEST_CASE("build_vocab breaks frequency ties lexicographically") {
    auto v = build_vocab({"zeta apple zeta apple mango"}, 1);
    CHECK(v.id("apple") == 4);
    CHECK(v.id("zeta") == 5);
    CHECK(v.id("mango") == 6);
}

TEST_CASE("encode_bi_item assembles title [SEP] category") {
    auto v = build_vocab({"red shoes footwear"}, 1);
    ItemDoc item{7, "red shoes", 1, "Footwear"};
    auto seq = encode_bi_item(item, v, 64);
    CHECK(seq.ids == std::vector<int>{v.id("red"), v.id("shoes"), Vocab::kSepId, v.id("footwear")});

    ItemDoc oov{8, "Unknown Words", 1, "Footwear"};
    auto seq2 = encode_bi_item(oov, v, 64);
    CHECK(seq2.ids == std::vector<int>{Vocab::kUnkId, Vocab::kUnkId, Vocab::kSepId, v.id("footwear")});

    auto seq3 = encode_bi_item(item, v, 2);
    CHECK(seq3.ids == std::vector<int>{v.id("red"), v.id("shoes")});
}

TEST_CASE("encode_cross_pair assembles CLS kp SEP category SEP title") {
    auto v = build_vocab({"nike shoes footwear red"}, 1);
    Keyphrase kp{3, "nike shoes"};
    ItemDoc item{7, "red nike shoes", 1, "Footwear"};
    auto seq = encode_cross_pair(kp, item, v, 64);
    CHECK(seq.ids == std::vector<int>{Vocab::kClsId, v.id("nike"), v.id("shoes"), Vocab::kSepId,
                                      v.id("footwear"), Vocab::kSepId, v.id("red"), v.id("nike"),
                                      v.id("shoes")});

    auto seq2 = encode_cross_pair(kp, item, v, 4);
    CHECK(seq2.ids == std::vector<int>{Vocab::kClsId, v.id("nike"), v.id("shoes"), Vocab::kSepId});
}

TEST_CASE("encodings are deterministic, in-vocab, and place SEP after the keyphrase") {
    Rng rng(7);
    const std::vector<std::string> pool = {"alpha", "beta", "gamma", "delta", "nine", "rare"};
    std::vector<std::string> corpus;
    for (int i = 0; i < 20; ++i) {
        std::string t;
        for (int k = 0; k < 5; ++k) t += pool[rng.uniform_index(pool.size())] + " ";
        corpus.push_back(t);
    }
    auto v = build_vocab(corpus, 1);
    for (int trial = 0; trial < 40; ++trial) {
        auto word = [&] { return pool[rng.uniform_index(pool.size())] + (rng.bernoulli(0.2) ? "zzz" : ""); };
        Keyphrase kp{trial, word() + " " + word()};
        ItemDoc item{trial, word() + " " + word() + " " + word(), 0, word()};
        auto a = encode_cross_pair(kp, item, v, 64);
        auto b = encode_cross_pair(kp, item, v, 64);
        CHECK(a.ids == b.ids);
        for (int id : a.ids) CHECK(id < v.size());
        const auto kp_len = tokenize(kp.text).size();
        REQUIRE(a.size() > kp_len + 1);
        CHECK(a.ids[1 + kp_len] == Vocab::kSepId);
        auto bi = encode_bi_item(item, v, 64);
        CHECK(bi.ids == encode_bi_item(item, v, 64).ids);
    }
}
