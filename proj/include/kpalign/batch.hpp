// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "kpalign/catalog.hpp"
#include "kpalign/common.hpp"
#include "kpalign/score_store.hpp"
#include "kpalign/scorer.hpp"
#include "kpalign/sim.hpp"

namespace kpalign {

// Candidate pairs, indexed both ways so diff/NRT runs can find exactly the
// pairs touching a changed entity. Retrieval is upstream: this is an
// explicit input, not a similarity search.
class PairSource {
public:
    PairSource() = default;

    explicit PairSource(std::vector<PairKey> pairs) : pairs_(std::move(pairs)) {
        std::sort(pairs_.begin(), pairs_.end());
        pairs_.erase(std::unique(pairs_.begin(), pairs_.end()), pairs_.end());
        for (size_t i = 0; i < pairs_.size(); ++i) {
            by_item_[pairs_[i].item_id].push_back(i);
            by_kp_[pairs_[i].keyphrase_id].push_back(i);
        }
    }

    const std::vector<PairKey>& all() const { return pairs_; }
    size_t size() const { return pairs_.size(); }

    std::vector<PairKey> pairs_for_item(int64_t item_id) const {
        std::vector<PairKey> out;
        auto it = by_item_.find(item_id);
        if (it != by_item_.end())
            for (size_t i : it->second) out.push_back(pairs_[i]);
        return out;
    }

    std::vector<PairKey> pairs_for_keyphrase(int64_t kp_id) const {
        std::vector<PairKey> out;
        auto it = by_kp_.find(kp_id);
        if (it != by_kp_.end())
            for (size_t i : it->second) out.push_back(pairs_[i]);
        return out;
    }

private:
    std::vector<PairKey> pairs_;
    std::unordered_map<int64_t, std::vector<size_t>> by_item_;
    std::unordered_map<int64_t, std::vector<size_t>> by_kp_;
};

// Scores every candidate pair once and writes a fresh store. All scoring
// happens before any file is touched, so a scoring failure leaves no
// partial output behind.
inline ScoreStore batch_score_full(const RelevanceScorer& scorer, const Catalog& catalog,
                                   const PairSource& pair_source, const std::filesystem::path& out_dir,
                                   ScoringCounters* counters = nullptr) {
    const auto records = scorer.score_pairs(catalog, pair_source.all(), counters);
    std::error_code ec;
    std::filesystem::remove_all(out_dir, ec);
    try {
        auto store = ScoreStore::create(out_dir, scorer.model_version());
        store.merge(records);
        return store;
    } catch (...) {
        std::filesystem::remove_all(out_dir, ec);
        throw;
    }
}

// Incremental pass: recompute only pairs touching changed/new entities and
// merge onto the existing store. Equivalent to a full rebuild over the
// post-change catalog with the same pair source.
inline void batch_score_diff(ScoreStore& store, const RelevanceScorer& scorer, const Catalog& catalog,
                             const std::vector<int64_t>& changed_item_ids,
                             const std::vector<int64_t>& new_keyphrase_ids, const PairSource& pair_source,
                             ScoringCounters* counters = nullptr) {
    if (store.model_version() != scorer.model_version())
        throw DataError("version mismatch - full rebuild required (store " + store.model_version() +
                        ", model " + scorer.model_version() + ")");
    std::vector<PairKey> touched;
    for (int64_t id : changed_item_ids) {
        catalog.item(id);
        auto pairs = pair_source.pairs_for_item(id);
        touched.insert(touched.end(), pairs.begin(), pairs.end());
    }
    for (int64_t id : new_keyphrase_ids) {
        catalog.keyphrase(id);
        auto pairs = pair_source.pairs_for_keyphrase(id);
        touched.insert(touched.end(), pairs.begin(), pairs.end());
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    const auto records = scorer.score_pairs(catalog, touched, counters);
    store.merge(records, changed_item_ids);
}

// ---------------------------------------------------------------------------
// Throughput benchmark over a seeded synthetic workload.

struct BenchConfig {
    std::string family = "bi";  // bi | cross-tiny | cross-mini | cross-bench
    int n_items = 1000;
    int n_keyphrases = 300;
    int n_pairs = 10000;
    int repeats = 3;
    uint64_t seed = 1;
    int max_len = 12;
    int threads = 1;

    void validate() const {
        if (n_items < 1 || n_keyphrases < 1 || n_pairs < 1) throw ConfigError("bench: counts must be >= 1");
        if (repeats < 1) throw ConfigError("bench: repeats must be >= 1");
        if (static_cast<int64_t>(n_pairs) > static_cast<int64_t>(n_items) * n_keyphrases)
            throw ConfigError("bench: n_pairs exceeds n_items * n_keyphrases");
    }
};

struct BenchReport {
    std::string family;
    int n_items = 0;
    int n_keyphrases = 0;
    int n_pairs = 0;
    uint64_t encodes = 0;
    uint64_t forwards = 0;
    double wall_ms_median = 0.0;
    double pairs_per_sec = 0.0;
    std::vector<double> wall_ms_runs;
};

inline BenchReport bench_throughput(const BenchConfig& cfg) {
    cfg.validate();
    SimConfig sim;
    sim.n_items = cfg.n_items;
    sim.n_keyphrases = cfg.n_keyphrases;
    sim.n_topics = 8;
    sim.seed = cfg.seed;
    const World world = gen_catalog(sim);
    const Catalog catalog = Catalog::from_world(world);

    std::vector<std::string> corpus;
    for (const auto& it : catalog.items) corpus.push_back(it.title + " " + it.category_name);
    for (const auto& kp : catalog.keyphrases) corpus.push_back(kp.text);
    const Vocab vocab = build_vocab(corpus, 1);

    Rng rng(mix64(cfg.seed, 0xbe2c4));
    std::vector<PairKey> pairs;
    std::unordered_set<PairKey, PairKeyHash> seen;
    pairs.reserve(static_cast<size_t>(cfg.n_pairs));
    while (pairs.size() < static_cast<size_t>(cfg.n_pairs)) {
        PairKey k{catalog.items[rng.uniform_index(catalog.items.size())].item_id,
                  catalog.keyphrases[rng.uniform_index(catalog.keyphrases.size())].keyphrase_id};
        if (seen.insert(k).second) pairs.push_back(k);
    }

    std::unique_ptr<RelevanceScorer> scorer;
    if (cfg.family == "bi") {
        auto model = BiEncoderModel::init(vocab.size(), 64, BiObjective::kContrastive, cfg.seed, vocab.hash());
        scorer = std::make_unique<BiEncoderScorer>(std::move(model), vocab, cfg.max_len);
    } else if (cfg.family == "cross-tiny" || cfg.family == "cross-mini" || cfg.family == "cross-bench") {
        CrossEncoderConfig cc;
        if (cfg.family == "cross-tiny") {
            cc = CrossEncoderConfig::tiny(vocab.size(), cfg.max_len, cfg.seed);
        } else if (cfg.family == "cross-mini") {
            cc = CrossEncoderConfig::mini(vocab.size(), cfg.max_len, cfg.seed);
        } else {
            cc = CrossEncoderConfig{1, 64, 2, 128, cfg.max_len, vocab.size(), cfg.seed, "bench"};
        }
        scorer = std::make_unique<CrossEncoderScorer>(CrossEncoderModel::init(cc, 0.05), vocab, cfg.max_len,
                                                      cfg.threads);
    } else {
        throw ConfigError("bench: unknown model family " + cfg.family);
    }

    BenchReport report;
    report.family = cfg.family;
    report.n_items = cfg.n_items;
    report.n_keyphrases = cfg.n_keyphrases;
    report.n_pairs = cfg.n_pairs;
    ScoringCounters counters;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
        counters.reset();
        const auto t0 = std::chrono::steady_clock::now();
        auto records = scorer->score_pairs(catalog, pairs, &counters);
        const auto t1 = std::chrono::steady_clock::now();
        if (records.size() != pairs.size()) throw DataError("bench: scorer dropped pairs");
        report.wall_ms_runs.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    report.encodes = counters.encodes.load();
    report.forwards = counters.forwards.load();
    auto runs = report.wall_ms_runs;
    std::sort(runs.begin(), runs.end());
    report.wall_ms_median = runs[runs.size() / 2];
    report.pairs_per_sec = report.wall_ms_median > 0.0
                               ? static_cast<double>(cfg.n_pairs) / (report.wall_ms_median / 1000.0)
                               : 0.0;
    return report;
}

}  // namespace kpalign
