// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kpalign/common.hpp"
#include "kpalign/eval.hpp"
#include "kpalign/jaccard.hpp"
#include "kpalign/text.hpp"

namespace kpalign {

struct SimConfig {
    int n_items = 200;
    int n_keyphrases = 80;
    int n_topics = 4;
    double search_noise = 0.1;         // probability the Search oracle flips the true label
    double position_decay = 0.7;       // click probability multiplier per rank
    double base_click_prob = 0.3;
    int impressions_per_auction = 20;
    int min_impressions = 30;
    double min_ctr = 0.05;
    int min_clicks = 1;
    uint64_t seed = 1;

    // world-shape knobs
    int auction_rounds = 12;
    double irrelevant_click_floor = 0.02;  // fraction of base_click_prob leaked to irrelevant entrants
    double sale_prob = 0.2;
    double cross_category_candidate_frac = 0.15;
    double synonym_keyphrase_frac = 0.15;
    double title_derived_keyphrase_frac = 0.5;  // keyphrases lifted verbatim from a title of their topic
    int judgment_floor_per_topic = 40;
    int judgment_total = 0;  // 0 = judge every candidate pair
    double judgment_eval_frac = 0.3;

    void validate() const;
};

// The latent relevance structure clicks cannot observe: per-entity topic
// mixtures plus discriminative-token overlap.
struct GroundTruth {
    std::vector<int> item_topic;
    std::vector<int> kp_topic;
    std::vector<std::vector<double>> item_mix;
    std::vector<std::vector<double>> kp_mix;
    std::vector<TokenSet> item_disc_tokens;            // per item: discriminative title tokens
    std::vector<std::vector<std::string>> kp_tokens;   // per keyphrase: its tokens (all discriminative)

    bool relevant(size_t item_idx, size_t kp_idx) const {
        if (item_topic[item_idx] == kp_topic[kp_idx]) return true;
        const auto& title = item_disc_tokens[item_idx];
        for (const auto& t : kp_tokens[kp_idx]) {
            if (title.count(t)) return true;
        }
        return false;
    }
};

struct World {
    SimConfig cfg;
    std::vector<ItemDoc> items;
    std::vector<Keyphrase> keyphrases;
    std::vector<std::string> topic_names;
    GroundTruth gt;
    std::unordered_map<int64_t, size_t> item_index;
    std::unordered_map<int64_t, size_t> kp_index;

    size_t item_idx(int64_t item_id) const {
        auto it = item_index.find(item_id);
        if (it == item_index.end()) throw DataError("unknown item id " + std::to_string(item_id));
        return it->second;
    }

    size_t keyphrase_idx(int64_t kp_id) const {
        auto it = kp_index.find(kp_id);
        if (it == kp_index.end()) throw DataError("unknown keyphrase id " + std::to_string(kp_id));
        return it->second;
    }

    bool gt_relevant(int64_t item_id, int64_t kp_id) const {
        return gt.relevant(item_idx(item_id), keyphrase_idx(kp_id));
    }

    // Search's relevance verdict: ground truth flipped with probability
    // search_noise. The flip is a pure hash of (seed, pair), so repeated
    // queries always agree.
    int search_oracle(int64_t item_id, int64_t kp_id) const {
        const bool rel = gt_relevant(item_id, kp_id);
        const uint64_t h = mix64(mix64(cfg.seed ^ 0x5ea2c80ac1eULL, static_cast<uint64_t>(item_id)),
                                 static_cast<uint64_t>(kp_id));
        const bool flip = hash_unit(h) < cfg.search_noise;
        return (rel != flip) ? 1 : 0;
    }
};

// Per logged pair, aggregated over every auction it entered. Records exist
// only for pairs that passed the Search oracle and were impressed.
struct ClickLogRecord {
    int64_t item_id = 0;
    int64_t keyphrase_id = 0;
    int64_t impressions = 0;
    int64_t clicks = 0;
    int64_t sales = 0;
};

struct RankCtrPoint {
    int rank = 0;
    int64_t impressions = 0;
    int64_t clicks = 0;

    double ctr() const { return impressions > 0 ? static_cast<double>(clicks) / static_cast<double>(impressions) : 0.0; }
};

struct TrafficResult {
    std::vector<ClickLogRecord> records;  // sorted by (item_id, keyphrase_id)
    std::vector<RankCtrPoint> rank_ctr;
};

struct JudgmentDataset {
    std::vector<RelevanceJudgment> train;
    std::vector<RelevanceJudgment> eval;
};

struct BiasReport {
    size_t click_pairs = 0;
    size_t oracle_fail_in_click = 0;
    double oracle_fail_fraction = 0.0;
    size_t oracle_irrelevant_region = 0;      // catalog pairs the oracle rejects
    size_t click_in_irrelevant_region = 0;
    double irrelevant_region_coverage = 0.0;
    std::vector<RankCtrPoint> rank_ctr;
};

namespace detail {

// Two stems per topic: titles and canonical keyphrases use the first,
// synonym keyphrases the second, so synonym pairs share zero tokens with the
// items they are relevant to.
inline const std::vector<std::pair<const char*, const char*>>& topic_stems() {
    static const std::vector<std::pair<const char*, const char*>> stems = {
        {"audio", "sound"},   {"shoe", "footwear"},  {"garden", "yard"},   {"camera", "photo"},
        {"cycle", "bike"},    {"kitchen", "cook"},   {"laptop", "notebook"}, {"fishing", "angler"},
        {"guitar", "strum"},  {"winter", "snow"},    {"office", "desk"},   {"camp", "trail"},
        {"motor", "engine"},  {"craft", "hobby"},    {"pet", "animal"},    {"baby", "infant"},
        {"yoga", "fitness"},  {"solar", "panel"},    {"marine", "boat"},   {"retro", "vintage"},
        {"drone", "copter"},  {"paint", "brush"},    {"tea", "brew"},      {"watch", "timer"},
    };
    return stems;
}

inline const std::vector<const char*>& token_suffixes() {
    static const std::vector<const char*> suffixes = {
        "max",  "pro",  "lite", "core", "plus", "neo",   "ultra", "mini", "prime", "flex",
        "zen",  "apex", "nova", "edge", "vibe", "bold",  "pure",  "aura", "dash",  "glow",
        "peak", "rush", "tide", "wave", "zoom", "bloom", "crest", "drift", "ember", "quill",
    };
    return suffixes;
}

inline const std::vector<const char*>& noise_tokens() {
    static const std::vector<const char*> noise = {
        "the", "new", "set", "kit", "for", "with", "original", "classic", "premium", "deluxe",
    };
    return noise;
}

inline std::string disc_token(int topic, int suffix, bool synonym) {
    const auto& stems = topic_stems();
    return std::string(synonym ? stems[static_cast<size_t>(topic)].second
                               : stems[static_cast<size_t>(topic)].first) +
           token_suffixes()[static_cast<size_t>(suffix)];
}

// Zipf-like geometric pick over the suffix pool: category vocabulary has a
// heavy head, which is what makes token overlap an informative signal.
inline int skewed_suffix(Rng& rng, int n) {
    const double u = rng.uniform();
    const int i = static_cast<int>(std::floor(std::log(1.0 - u) / std::log(0.62)));
    return std::min(n - 1, std::max(0, i));
}

}  // namespace detail

inline void SimConfig::validate() const {
    if (n_items < 1 || n_keyphrases < 1) throw ConfigError("sim: n_items and n_keyphrases must be >= 1");
    if (n_topics < 2) throw ConfigError("sim: n_topics must be >= 2");
    if (n_topics > static_cast<int>(detail::topic_stems().size()))
        throw ConfigError("sim: n_topics exceeds token pool capacity (" +
                          std::to_string(detail::topic_stems().size()) + ")");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(search_noise)) throw ConfigError("sim: search_noise must be in [0,1]");
    if (position_decay <= 0.0 || position_decay > 1.0) throw ConfigError("sim: position_decay must be in (0,1]");
    if (base_click_prob <= 0.0 || base_click_prob >= 1.0) throw ConfigError("sim: base_click_prob must be in (0,1)");
    if (impressions_per_auction < 1) throw ConfigError("sim: impressions_per_auction must be >= 1");
    if (min_impressions < 1) throw ConfigError("sim: min_impressions must be >= 1");
    if (!prob(min_ctr)) throw ConfigError("sim: min_ctr must be in [0,1]");
    if (min_clicks < 0) throw ConfigError("sim: min_clicks must be >= 0");
    if (auction_rounds < 1) throw ConfigError("sim: auction_rounds must be >= 1");
    if (!prob(irrelevant_click_floor)) throw ConfigError("sim: irrelevant_click_floor must be in [0,1]");
    if (!prob(sale_prob)) throw ConfigError("sim: sale_prob must be in [0,1]");
    if (!prob(cross_category_candidate_frac)) throw ConfigError("sim: cross_category_candidate_frac must be in [0,1]");
    if (!prob(synonym_keyphrase_frac)) throw ConfigError("sim: synonym_keyphrase_frac must be in [0,1]");
    if (!prob(title_derived_keyphrase_frac))
        throw ConfigError("sim: title_derived_keyphrase_frac must be in [0,1]");
    if (judgment_floor_per_topic < 0) throw ConfigError("sim: judgment_floor_per_topic must be >= 0");
    if (judgment_eval_frac <= 0.0 || judgment_eval_frac >= 1.0)
        throw ConfigError("sim: judgment_eval_frac must be in (0,1)");
}

// Builds the synthetic marketplace: topic-consistent titles from per-topic
// token pools plus shared noise tokens, keyphrases of 1-3 topical tokens, a
// slice of them written with synonym stems so Jaccard sees zero overlap.
inline World gen_catalog(const SimConfig& cfg) {
    cfg.validate();
    World w;
    w.cfg = cfg;
    const auto& stems = detail::topic_stems();
    const int n_suffix = static_cast<int>(detail::token_suffixes().size());
    for (int t = 0; t < cfg.n_topics; ++t) w.topic_names.emplace_back(stems[static_cast<size_t>(t)].first);

    Rng rng(mix64(cfg.seed, 0xca7a109));
    w.items.reserve(static_cast<size_t>(cfg.n_items));
    w.gt.item_topic.reserve(static_cast<size_t>(cfg.n_items));
    for (int i = 0; i < cfg.n_items; ++i) {
        // round-robin over the first n_topics items so every topic is populated
        const int tp = i < cfg.n_topics ? i : static_cast<int>(rng.uniform_index(static_cast<uint64_t>(cfg.n_topics)));
        int ts = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(cfg.n_topics - 1)));
        if (ts >= tp) ++ts;
        const double wp = rng.uniform(0.65, 0.95);

        const int n_title = static_cast<int>(rng.uniform_int(4, 7));
        std::vector<std::string> toks;
        toks.push_back(detail::disc_token(tp, detail::skewed_suffix(rng, n_suffix), false));
        for (int k = 1; k < n_title; ++k) {
            const double u = rng.uniform();
            if (u < wp) {
                toks.push_back(detail::disc_token(tp, detail::skewed_suffix(rng, n_suffix), false));
            } else if (u < wp + (1.0 - wp) * 0.5) {
                toks.push_back(detail::disc_token(ts, detail::skewed_suffix(rng, n_suffix), false));
            } else {
                toks.push_back(detail::noise_tokens()[rng.uniform_index(detail::noise_tokens().size())]);
            }
        }
        std::string title;
        for (size_t k = 0; k < toks.size(); ++k) {
            if (k) title += ' ';
            title += toks[k];
        }

        ItemDoc item;
        item.item_id = i;
        item.title = title;
        item.category_id = tp;
        item.category_name = w.topic_names[static_cast<size_t>(tp)];
        w.items.push_back(std::move(item));

        w.gt.item_topic.push_back(tp);
        std::vector<double> mix(static_cast<size_t>(cfg.n_topics), 0.0);
        mix[static_cast<size_t>(tp)] = wp;
        mix[static_cast<size_t>(ts)] = 1.0 - wp;
        w.gt.item_mix.push_back(std::move(mix));
        TokenSet disc;
        const auto& noise = detail::noise_tokens();
        for (const auto& t : toks) {
            const bool is_noise = std::find_if(noise.begin(), noise.end(),
                                               [&](const char* n) { return t == n; }) != noise.end();
            if (!is_noise) disc.insert(t);
        }
        w.gt.item_disc_tokens.push_back(std::move(disc));
    }

    std::vector<std::vector<size_t>> items_by_topic(static_cast<size_t>(cfg.n_topics));
    for (size_t i = 0; i < w.items.size(); ++i)
        items_by_topic[static_cast<size_t>(w.gt.item_topic[i])].push_back(i);

    w.keyphrases.reserve(static_cast<size_t>(cfg.n_keyphrases));
    bool have_synonym = false;
    for (int j = 0; j < cfg.n_keyphrases; ++j) {
        const int tk = j < cfg.n_topics ? j : static_cast<int>(rng.uniform_index(static_cast<uint64_t>(cfg.n_topics)));
        bool synonym = rng.bernoulli(cfg.synonym_keyphrase_frac);
        if (j == cfg.n_keyphrases - 1 && !have_synonym) synonym = true;  // guarantee one synonym pair per world
        have_synonym = have_synonym || synonym;
        const int len = static_cast<int>(rng.uniform_int(1, 3));
        std::vector<std::string> toks;
        const auto& topic_items = items_by_topic[static_cast<size_t>(tk)];
        if (!synonym && !topic_items.empty() && rng.bernoulli(cfg.title_derived_keyphrase_frac)) {
            // lift tokens from a real title, the way sellers phrase queries
            const auto& title_tokens = w.gt.item_disc_tokens[topic_items[rng.uniform_index(topic_items.size())]];
            std::vector<std::string> source(title_tokens.begin(), title_tokens.end());
            std::sort(source.begin(), source.end());
            rng.shuffle(source);
            for (int k = 0; k < len && k < static_cast<int>(source.size()); ++k)
                toks.push_back(source[static_cast<size_t>(k)]);
        }
        std::unordered_set<int> used;
        while (static_cast<int>(toks.size()) < len) {
            int sfx = detail::skewed_suffix(rng, n_suffix);
            while (used.count(sfx)) sfx = (sfx + 1) % n_suffix;
            used.insert(sfx);
            toks.push_back(detail::disc_token(tk, sfx, synonym));
        }
        std::string text;
        for (size_t k = 0; k < toks.size(); ++k) {
            if (k) text += ' ';
            text += toks[k];
        }
        Keyphrase kp;
        kp.keyphrase_id = j;
        kp.text = std::move(text);
        w.keyphrases.push_back(std::move(kp));

        w.gt.kp_topic.push_back(tk);
        std::vector<double> mix(static_cast<size_t>(cfg.n_topics), 0.0);
        mix[static_cast<size_t>(tk)] = 1.0;
        w.gt.kp_mix.push_back(std::move(mix));
        w.gt.kp_tokens.push_back(std::move(toks));
    }

    for (size_t i = 0; i < w.items.size(); ++i) w.item_index[w.items[i].item_id] = i;
    for (size_t j = 0; j < w.keyphrases.size(); ++j) w.kp_index[w.keyphrases[j].keyphrase_id] = j;
    return w;
}

// Advertising's candidate pairs: same-category cross product plus a sampled
// slice of cross-category pairs (those are what Search mostly rejects).
inline std::vector<PairKey> gen_advertised_pairs(const World& w) {
    std::vector<std::vector<int64_t>> items_by_topic(static_cast<size_t>(w.cfg.n_topics));
    for (size_t i = 0; i < w.items.size(); ++i)
        items_by_topic[static_cast<size_t>(w.gt.item_topic[i])].push_back(w.items[i].item_id);

    Rng rng(mix64(w.cfg.seed, 0xadf00d));
    std::vector<PairKey> pairs;
    std::unordered_set<PairKey, PairKeyHash> seen;
    for (size_t j = 0; j < w.keyphrases.size(); ++j) {
        const int64_t kp_id = w.keyphrases[j].keyphrase_id;
        const auto& same = items_by_topic[static_cast<size_t>(w.gt.kp_topic[j])];
        for (int64_t item_id : same) {
            if (seen.insert({item_id, kp_id}).second) pairs.push_back({item_id, kp_id});
        }
        const size_t n_cross =
            static_cast<size_t>(static_cast<double>(same.size()) * w.cfg.cross_category_candidate_frac) + 1;
        for (size_t k = 0; k < n_cross; ++k) {
            const auto& item = w.items[rng.uniform_index(w.items.size())];
            if (w.gt.item_topic[w.item_idx(item.item_id)] == w.gt.kp_topic[j]) continue;
            if (seen.insert({item.item_id, kp_id}).second) pairs.push_back({item.item_id, kp_id});
        }
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

// Runs the advertising funnel: per keyphrase, only oracle-passing items
// enter the auction; entrants are ranked by accumulated clicks (the
// popularity feedback loop) and receive position-decayed impressions.
inline TrafficResult simulate_traffic(const World& w, const std::vector<PairKey>& advertised,
                                      const SimConfig& cfg) {
    struct Cell {
        int64_t impressions = 0, clicks = 0, sales = 0;
    };
    std::unordered_map<PairKey, Cell, PairKeyHash> cells;
    std::unordered_map<int64_t, int64_t> popularity;  // item -> accumulated clicks

    std::vector<std::pair<int64_t, std::vector<int64_t>>> auctions;  // kp -> entrant items
    {
        std::unordered_map<int64_t, std::vector<int64_t>> by_kp;
        for (const auto& p : advertised) {
            w.item_idx(p.item_id);
            w.keyphrase_idx(p.keyphrase_id);
            if (w.search_oracle(p.item_id, p.keyphrase_id) == 1) by_kp[p.keyphrase_id].push_back(p.item_id);
        }
        for (auto& [kp, items] : by_kp) {
            std::sort(items.begin(), items.end());
            auctions.emplace_back(kp, std::move(items));
        }
        std::sort(auctions.begin(), auctions.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
    }

    TrafficResult out;
    Rng rng(mix64(cfg.seed, 0x7aff1c));
    std::vector<int64_t> ranked;
    for (int round = 0; round < cfg.auction_rounds; ++round) {
        for (const auto& [kp_id, entrants] : auctions) {
            ranked = entrants;
            std::sort(ranked.begin(), ranked.end(), [&](int64_t a, int64_t b) {
                const int64_t pa = popularity[a], pb = popularity[b];
                if (pa != pb) return pa > pb;
                return a < b;
            });
            const size_t kp_idx = w.keyphrase_idx(kp_id);
            double decay = 1.0;
            for (size_t r = 0; r < ranked.size(); ++r) {
                const int64_t item_id = ranked[r];
                const bool rel = w.gt.relevant(w.item_idx(item_id), kp_idx);
                const double p =
                    std::min(1.0, cfg.base_click_prob * decay * ((rel ? 1.0 : 0.0) + cfg.irrelevant_click_floor));
                const int64_t clicks = rng.binomial(cfg.impressions_per_auction, p);
                const int64_t sales = rng.binomial(clicks, cfg.sale_prob);
                auto& cell = cells[{item_id, kp_id}];
                cell.impressions += cfg.impressions_per_auction;
                cell.clicks += clicks;
                cell.sales += sales;
                popularity[item_id] += clicks;
                if (out.rank_ctr.size() <= r) out.rank_ctr.push_back({static_cast<int>(r), 0, 0});
                out.rank_ctr[r].impressions += cfg.impressions_per_auction;
                out.rank_ctr[r].clicks += clicks;
                decay *= cfg.position_decay;
            }
        }
    }

    out.records.reserve(cells.size());
    for (const auto& [key, cell] : cells)
        out.records.push_back({key.item_id, key.keyphrase_id, cell.impressions, cell.clicks, cell.sales});
    std::sort(out.records.begin(), out.records.end(), [](const ClickLogRecord& a, const ClickLogRecord& b) {
        return std::pair(a.item_id, a.keyphrase_id) < std::pair(b.item_id, b.keyphrase_id);
    });
    return out;
}

// Click-based training positives: the CTR/impression/click floors drop
// accidental and low-CTR records.
inline std::vector<ClickLogRecord> derive_click_dataset(const std::vector<ClickLogRecord>& log,
                                                        const SimConfig& cfg) {
    std::vector<ClickLogRecord> out;
    for (const auto& r : log) {
        if (r.clicks < cfg.min_clicks) continue;
        if (r.impressions < cfg.min_impressions) continue;
        const double ctr = r.impressions > 0 ? static_cast<double>(r.clicks) / static_cast<double>(r.impressions) : 0.0;
        if (ctr < cfg.min_ctr) continue;
        out.push_back(r);
    }
    return out;
}

// Search-judgment dataset, stratified by item category: per-topic quota
// proportional to simulated traffic with a floor, split disjointly by pair.
inline JudgmentDataset derive_judgment_dataset(const World& w, const std::vector<PairKey>& pairs,
                                               const TrafficResult& traffic, const SimConfig& cfg) {
    const size_t n_topics = static_cast<size_t>(cfg.n_topics);
    std::vector<std::vector<PairKey>> by_topic(n_topics);
    for (const auto& p : pairs) by_topic[static_cast<size_t>(w.gt.item_topic[w.item_idx(p.item_id)])].push_back(p);

    std::vector<double> topic_traffic(n_topics, 0.0);
    double total_traffic = 0.0;
    for (const auto& r : traffic.records) {
        const auto t = static_cast<size_t>(w.gt.item_topic[w.item_idx(r.item_id)]);
        topic_traffic[t] += static_cast<double>(r.impressions);
        total_traffic += static_cast<double>(r.impressions);
    }

    Rng rng(mix64(cfg.seed, 0x90d9e27));
    std::vector<PairKey> sampled;
    for (size_t t = 0; t < n_topics; ++t) {
        auto& bucket = by_topic[t];
        rng.shuffle(bucket);
        size_t take = bucket.size();
        if (cfg.judgment_total > 0) {
            const double share = total_traffic > 0.0 ? topic_traffic[t] / total_traffic : 1.0 / static_cast<double>(n_topics);
            const auto want = static_cast<size_t>(share * static_cast<double>(cfg.judgment_total));
            take = std::min(bucket.size(), std::max<size_t>(static_cast<size_t>(cfg.judgment_floor_per_topic), want));
        }
        sampled.insert(sampled.end(), bucket.begin(), bucket.begin() + static_cast<std::ptrdiff_t>(take));
    }
    rng.shuffle(sampled);

    JudgmentDataset out;
    const auto n_eval = static_cast<size_t>(cfg.judgment_eval_frac * static_cast<double>(sampled.size()));
    for (size_t i = 0; i < sampled.size(); ++i) {
        RelevanceJudgment j{sampled[i].item_id, sampled[i].keyphrase_id,
                            w.search_oracle(sampled[i].item_id, sampled[i].keyphrase_id)};
        (i < n_eval ? out.eval : out.train).push_back(j);
    }
    return out;
}

inline BiasReport measure_middleman_bias(const std::vector<ClickLogRecord>& click_dataset, const World& w,
                                         const TrafficResult& traffic) {
    BiasReport rep;
    rep.click_pairs = click_dataset.size();
    std::unordered_set<PairKey, PairKeyHash> click_keys;
    for (const auto& r : click_dataset) {
        click_keys.insert({r.item_id, r.keyphrase_id});
        if (w.search_oracle(r.item_id, r.keyphrase_id) == 0) ++rep.oracle_fail_in_click;
    }
    rep.oracle_fail_fraction =
        rep.click_pairs ? static_cast<double>(rep.oracle_fail_in_click) / static_cast<double>(rep.click_pairs) : 0.0;
    for (const auto& item : w.items) {
        for (const auto& kp : w.keyphrases) {
            if (w.search_oracle(item.item_id, kp.keyphrase_id) == 0) {
                ++rep.oracle_irrelevant_region;
                if (click_keys.count({item.item_id, kp.keyphrase_id})) ++rep.click_in_irrelevant_region;
            }
        }
    }
    rep.irrelevant_region_coverage =
        rep.oracle_irrelevant_region
            ? static_cast<double>(rep.click_in_irrelevant_region) / static_cast<double>(rep.oracle_irrelevant_region)
            : 0.0;
    rep.rank_ctr = traffic.rank_ctr;
    return rep;
}

}  // namespace kpalign
