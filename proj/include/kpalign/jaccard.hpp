// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "kpalign/common.hpp"
#include "kpalign/text.hpp"

namespace kpalign {

using TokenSet = std::unordered_set<std::string>;

inline TokenSet token_set(std::string_view text) {
    TokenSet set;
    for (auto& t : tokenize(text)) set.insert(std::move(t));
    return set;
}

// |a ∩ b| / |a ∪ b|. Both-empty is defined as 0: an empty keyphrase must
// never look relevant.
inline double jaccard_index(const TokenSet& a, const TokenSet& b) {
    if (a.empty() && b.empty()) return 0.0;
    const TokenSet& small = a.size() <= b.size() ? a : b;
    const TokenSet& large = a.size() <= b.size() ? b : a;
    size_t inter = 0;
    for (const auto& t : small) inter += large.count(t);
    const size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

struct JaccardConfig {
    double threshold = 0.3;
    bool use_category_tokens = false;

    void validate() const {
        if (threshold < 0.0 || threshold > 1.0) throw ConfigError("jaccard threshold must be in [0,1]");
    }
};

struct JaccardResult {
    int64_t keyphrase_id = 0;
    double score = 0.0;
    bool pass = false;
};

inline std::vector<JaccardResult> jaccard_filter(const ItemDoc& item, const std::vector<Keyphrase>& kps,
                                                 const JaccardConfig& cfg) {
    cfg.validate();
    TokenSet item_tokens = token_set(item.title);
    if (cfg.use_category_tokens) {
        for (auto& t : tokenize(item.category_name)) item_tokens.insert(std::move(t));
    }
    std::vector<JaccardResult> out;
    out.reserve(kps.size());
    for (const auto& kp : kps) {
        const double score = jaccard_index(item_tokens, token_set(kp.text));
        out.push_back({kp.keyphrase_id, score, score >= cfg.threshold});
    }
    return out;
}

}  // namespace kpalign
