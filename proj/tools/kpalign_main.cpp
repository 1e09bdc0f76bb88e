// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
//
// kpalign: simulate a marketplace, train relevance filters, evaluate Search
// alignment, and serve scores through full-batch / diff / NRT paths.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kpalign/batch.hpp"
#include "kpalign/catalog.hpp"
#include "kpalign/checkpoint.hpp"
#include "kpalign/eval.hpp"
#include "kpalign/nrt.hpp"
#include "kpalign/score_store.hpp"
#include "kpalign/scorer.hpp"
#include "kpalign/sim.hpp"

namespace fs = std::filesystem;
using namespace kpalign;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitDataError = 3;
constexpr int kExitGateFailure = 4;

// ---------------------------------------------------------------------------
// Run configuration: JSON file merged under command-line flags.

struct TrainOptions {
    std::string data = "judgments";  // judgments | clicks
    int epochs = 3;
    double lr = 0.0;  // 0 = family default
    int batch_size = 32;
    double margin = 0.5;
    double temperature = 0.1;
    int threads = 2;
    int max_examples = 0;  // 0 = all
};

struct ModelOptions {
    int dim = 32;       // bi-encoder embedding dim
    int max_len = 32;   // token budget for encoder inputs
    double threshold = -1.0;  // <0 = family default / calibrated
};

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    int window_ms = 500;
    int64_t run_for_ms = 0;  // 0 = run until killed
};

struct EvalOptions {
    double min_f1 = -1.0;  // <0 = no gate
};

struct RunConfig {
    uint64_t seed = 0;
    bool seed_set = false;
    SimConfig sim;
    TrainOptions train;
    ModelOptions model;
    JaccardConfig jaccard;
    ServeOptions serve;
    BenchConfig bench;
    EvalOptions eval;
};

const std::map<std::string, std::set<std::string>>& known_config_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"", {"seed", "sim", "train", "model", "jaccard", "serve", "bench", "eval"}},
        {"sim",
         {"n_items", "n_keyphrases", "n_topics", "search_noise", "position_decay", "base_click_prob",
          "impressions_per_auction", "min_impressions", "min_ctr", "min_clicks", "auction_rounds",
          "irrelevant_click_floor", "sale_prob", "cross_category_candidate_frac", "synonym_keyphrase_frac", "title_derived_keyphrase_frac",
          "judgment_floor_per_topic", "judgment_total", "judgment_eval_frac"}},
        {"train",
         {"data", "epochs", "lr", "batch_size", "margin", "temperature", "threads", "max_examples"}},
        {"model", {"dim", "max_len", "threshold"}},
        {"jaccard", {"threshold", "use_category_tokens"}},
        {"serve", {"host", "port", "window_ms", "run_for_ms"}},
        {"bench", {"family", "n_items", "n_keyphrases", "n_pairs", "repeats", "max_len", "threads"}},
        {"eval", {"min_f1"}},
    };
    return keys;
}

void reject_unknown_keys(const json& obj, const std::string& section) {
    const auto& known = known_config_keys();
    auto it = known.find(section);
    if (it == known.end()) throw ConfigError("unknown config section: " + section);
    for (const auto& [key, value] : obj.items()) {
        if (!it->second.count(key))
            throw ConfigError("unknown config key: " + (section.empty() ? key : section + "." + key));
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_config_file(RunConfig& cfg, const fs::path& path) {
    const json j = read_json_file(path);
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object: " + path.string());
    reject_unknown_keys(j, "");
    if (j.contains("seed")) {
        cfg.seed = j.at("seed").get<uint64_t>();
        cfg.seed_set = true;
    }
    if (j.contains("sim")) {
        const auto& s = j.at("sim");
        reject_unknown_keys(s, "sim");
        maybe(s, "n_items", cfg.sim.n_items);
        maybe(s, "n_keyphrases", cfg.sim.n_keyphrases);
        maybe(s, "n_topics", cfg.sim.n_topics);
        maybe(s, "search_noise", cfg.sim.search_noise);
        maybe(s, "position_decay", cfg.sim.position_decay);
        maybe(s, "base_click_prob", cfg.sim.base_click_prob);
        maybe(s, "impressions_per_auction", cfg.sim.impressions_per_auction);
        maybe(s, "min_impressions", cfg.sim.min_impressions);
        maybe(s, "min_ctr", cfg.sim.min_ctr);
        maybe(s, "min_clicks", cfg.sim.min_clicks);
        maybe(s, "auction_rounds", cfg.sim.auction_rounds);
        maybe(s, "irrelevant_click_floor", cfg.sim.irrelevant_click_floor);
        maybe(s, "sale_prob", cfg.sim.sale_prob);
        maybe(s, "cross_category_candidate_frac", cfg.sim.cross_category_candidate_frac);
        maybe(s, "synonym_keyphrase_frac", cfg.sim.synonym_keyphrase_frac);
        maybe(s, "title_derived_keyphrase_frac", cfg.sim.title_derived_keyphrase_frac);
        maybe(s, "judgment_floor_per_topic", cfg.sim.judgment_floor_per_topic);
        maybe(s, "judgment_total", cfg.sim.judgment_total);
        maybe(s, "judgment_eval_frac", cfg.sim.judgment_eval_frac);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown_keys(t, "train");
        maybe(t, "data", cfg.train.data);
        maybe(t, "epochs", cfg.train.epochs);
        maybe(t, "lr", cfg.train.lr);
        maybe(t, "batch_size", cfg.train.batch_size);
        maybe(t, "margin", cfg.train.margin);
        maybe(t, "temperature", cfg.train.temperature);
        maybe(t, "threads", cfg.train.threads);
        maybe(t, "max_examples", cfg.train.max_examples);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown_keys(m, "model");
        maybe(m, "dim", cfg.model.dim);
        maybe(m, "max_len", cfg.model.max_len);
        maybe(m, "threshold", cfg.model.threshold);
    }
    if (j.contains("jaccard")) {
        const auto& jc = j.at("jaccard");
        reject_unknown_keys(jc, "jaccard");
        maybe(jc, "threshold", cfg.jaccard.threshold);
        maybe(jc, "use_category_tokens", cfg.jaccard.use_category_tokens);
    }
    if (j.contains("serve")) {
        const auto& s = j.at("serve");
        reject_unknown_keys(s, "serve");
        maybe(s, "host", cfg.serve.host);
        maybe(s, "port", cfg.serve.port);
        maybe(s, "window_ms", cfg.serve.window_ms);
        maybe(s, "run_for_ms", cfg.serve.run_for_ms);
    }
    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        reject_unknown_keys(b, "bench");
        maybe(b, "family", cfg.bench.family);
        maybe(b, "n_items", cfg.bench.n_items);
        maybe(b, "n_keyphrases", cfg.bench.n_keyphrases);
        maybe(b, "n_pairs", cfg.bench.n_pairs);
        maybe(b, "repeats", cfg.bench.repeats);
        maybe(b, "max_len", cfg.bench.max_len);
        maybe(b, "threads", cfg.bench.threads);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        reject_unknown_keys(e, "eval");
        maybe(e, "min_f1", cfg.eval.min_f1);
    }
}

json sim_to_json(const SimConfig& s) {
    return json{{"n_items", s.n_items},
                {"n_keyphrases", s.n_keyphrases},
                {"n_topics", s.n_topics},
                {"search_noise", s.search_noise},
                {"position_decay", s.position_decay},
                {"base_click_prob", s.base_click_prob},
                {"impressions_per_auction", s.impressions_per_auction},
                {"min_impressions", s.min_impressions},
                {"min_ctr", s.min_ctr},
                {"min_clicks", s.min_clicks},
                {"auction_rounds", s.auction_rounds},
                {"irrelevant_click_floor", s.irrelevant_click_floor},
                {"sale_prob", s.sale_prob},
                {"cross_category_candidate_frac", s.cross_category_candidate_frac},
                {"synonym_keyphrase_frac", s.synonym_keyphrase_frac},
                {"title_derived_keyphrase_frac", s.title_derived_keyphrase_frac},
                {"judgment_floor_per_topic", s.judgment_floor_per_topic},
                {"judgment_total", s.judgment_total},
                {"judgment_eval_frac", s.judgment_eval_frac},
                {"seed", s.seed}};
}

json effective_config(const RunConfig& cfg, const std::string& command) {
    json j;
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["sim"] = sim_to_json(cfg.sim);
    j["train"] = {{"data", cfg.train.data},         {"epochs", cfg.train.epochs},
                  {"lr", cfg.train.lr},             {"batch_size", cfg.train.batch_size},
                  {"margin", cfg.train.margin},     {"temperature", cfg.train.temperature},
                  {"threads", cfg.train.threads},   {"max_examples", cfg.train.max_examples}};
    j["model"] = {{"dim", cfg.model.dim}, {"max_len", cfg.model.max_len}, {"threshold", cfg.model.threshold}};
    j["jaccard"] = {{"threshold", cfg.jaccard.threshold}, {"use_category_tokens", cfg.jaccard.use_category_tokens}};
    j["serve"] = {{"host", cfg.serve.host},
                  {"port", cfg.serve.port},
                  {"window_ms", cfg.serve.window_ms},
                  {"run_for_ms", cfg.serve.run_for_ms}};
    j["bench"] = {{"family", cfg.bench.family},   {"n_items", cfg.bench.n_items},
                  {"n_keyphrases", cfg.bench.n_keyphrases}, {"n_pairs", cfg.bench.n_pairs},
                  {"repeats", cfg.bench.repeats}, {"max_len", cfg.bench.max_len},
                  {"threads", cfg.bench.threads}};
    j["eval"] = {{"min_f1", cfg.eval.min_f1}};
    return j;
}

void require_seed(const RunConfig& cfg) {
    if (!cfg.seed_set) throw ConfigError("--seed is required (or 'seed' in the config file)");
}

// ---------------------------------------------------------------------------
// World directories.

struct WorldDir {
    fs::path dir;
    Catalog catalog;
    std::vector<PairKey> candidates;
    std::vector<RelevanceJudgment> judgments_train;
    std::vector<RelevanceJudgment> judgments_eval;
    std::vector<ClickLogRecord> click_dataset;
    json manifest;
};

WorldDir load_world_dir(const fs::path& dir) {
    WorldDir w;
    w.dir = dir;
    w.catalog.items = read_items(dir / "items.jsonl");
    w.catalog.keyphrases = read_keyphrases(dir / "keyphrases.jsonl");
    w.catalog.rebuild_index();
    w.candidates = read_pairs(dir / "candidates.jsonl");
    w.judgments_train = read_judgments(dir / "judgments_train.jsonl");
    w.judgments_eval = read_judgments(dir / "judgments_eval.jsonl");
    w.click_dataset = read_click_log(dir / "click_dataset.jsonl");
    w.manifest = read_json_file(dir / "manifest.json");
    return w;
}

Vocab vocab_for_catalog(const Catalog& catalog) {
    std::vector<std::string> corpus;
    corpus.reserve(catalog.items.size() + catalog.keyphrases.size());
    for (const auto& it : catalog.items) corpus.push_back(it.title + " " + it.category_name);
    for (const auto& kp : catalog.keyphrases) corpus.push_back(kp.text);
    return build_vocab(corpus, 1);
}

std::unique_ptr<RelevanceScorer> load_scorer(const std::string& model_arg, const RunConfig& cfg) {
    if (model_arg == "jaccard") return std::make_unique<JaccardScorer>(cfg.jaccard);
    const fs::path dir(model_arg);
    const auto ckpt = dir / "checkpoint.json";
    if (!fs::exists(ckpt))
        throw DataError("model argument must be 'jaccard' or a model directory with checkpoint.json: " + model_arg);
    const Vocab vocab = load_vocab(dir / "vocab.json");
    const std::string family = checkpoint_family(ckpt);
    if (family == "bi") {
        auto model = load_bi_checkpoint(ckpt, vocab);
        if (cfg.model.threshold >= 0.0) model.set_threshold(cfg.model.threshold);
        return std::make_unique<BiEncoderScorer>(std::move(model), vocab, cfg.model.max_len);
    }
    if (family == "cross") {
        auto model = load_cross_checkpoint(ckpt, vocab);
        if (cfg.model.threshold >= 0.0) model.set_threshold(cfg.model.threshold);
        return std::make_unique<CrossEncoderScorer>(std::move(model), vocab, cfg.model.max_len,
                                                    cfg.train.threads);
    }
    throw DataError("unknown checkpoint family: " + family);
}

void print_prf1_row(const std::string& name, const PRF1Report& r) {
    std::printf("  %-28s P=%.4f  R=%.4f  F1=%.4f  (pos=%lld neg=%lld)\n", name.c_str(), r.precision, r.recall,
                r.f1, static_cast<long long>(r.support_pos), static_cast<long long>(r.support_neg));
}

json prf1_to_json(const PRF1Report& r) {
    return json{{"precision", r.precision},
                {"recall", r.recall},
                {"f1", r.f1},
                {"support_pos", r.support_pos},
                {"support_neg", r.support_neg}};
}

// ---------------------------------------------------------------------------
// Training data assembly.

std::vector<PairKey> judgment_pairs(const std::vector<RelevanceJudgment>& js) {
    std::vector<PairKey> out;
    out.reserve(js.size());
    for (const auto& j : js) out.push_back({j.item_id, j.keyphrase_id});
    return out;
}

// Click-derived supervision: the filtered click pairs are positives; random
// catalog pairs outside the click set stand in as negatives.
std::vector<RelevanceJudgment> click_training_labels(const WorldDir& w, uint64_t seed) {
    std::vector<RelevanceJudgment> out;
    std::unordered_set<PairKey, PairKeyHash> clicked;
    for (const auto& r : w.click_dataset) {
        out.push_back({r.item_id, r.keyphrase_id, 1});
        clicked.insert({r.item_id, r.keyphrase_id});
    }
    if (out.empty()) throw DataError("click dataset is empty; nothing to train on");
    Rng rng(mix64(seed, 0xc11c4e9));
    const size_t want_negatives = out.size();
    size_t guard = 0;
    size_t negatives = 0;
    while (negatives < want_negatives && guard < want_negatives * 200) {
        ++guard;
        PairKey k{w.catalog.items[rng.uniform_index(w.catalog.items.size())].item_id,
                  w.catalog.keyphrases[rng.uniform_index(w.catalog.keyphrases.size())].keyphrase_id};
        if (clicked.count(k)) continue;
        clicked.insert(k);  // avoid duplicate negatives
        out.push_back({k.item_id, k.keyphrase_id, 0});
        ++negatives;
    }
    return out;
}

std::vector<RelevanceJudgment> cap_examples(std::vector<RelevanceJudgment> rows, int max_examples,
                                            uint64_t seed) {
    if (max_examples <= 0 || rows.size() <= static_cast<size_t>(max_examples)) return rows;
    Rng rng(mix64(seed, 0xca93e5));
    rng.shuffle(rows);
    rows.resize(static_cast<size_t>(max_examples));
    return rows;
}

struct TrainedModel {
    std::string family;
    std::optional<BiEncoderModel> bi;
    std::optional<CrossEncoderModel> cross;
    TrainTrace trace;
    std::string model_version;
};

TrainedModel train_model(const std::string& family, const WorldDir& world, const Vocab& vocab,
                         const std::vector<RelevanceJudgment>& labels, const RunConfig& cfg) {
    TrainedModel out;
    out.family = family;
    const size_t max_len = static_cast<size_t>(cfg.model.max_len);

    if (family == "bi-contrastive" || family == "bi-softmax" || family == "bi-irns") {
        BiTrainConfig tc;
        tc.objective = bi_objective_from_string(family.substr(3));
        tc.epochs = cfg.train.epochs;
        tc.lr = cfg.train.lr > 0.0 ? cfg.train.lr : 0.05;
        tc.batch_size = cfg.train.batch_size;
        tc.margin = cfg.train.margin;
        tc.temperature = cfg.train.temperature;
        tc.seed = cfg.seed;
        auto model = BiEncoderModel::init(vocab.size(), cfg.model.dim, tc.objective, cfg.seed, vocab.hash());

        if (tc.objective == BiObjective::kIrns) {
            std::vector<BiPositivePair> positives;
            for (const auto& j : labels) {
                if (j.label != 1) continue;
                positives.push_back({encode_bi_item(world.catalog.item(j.item_id), vocab, max_len),
                                     encode_bi_keyphrase(world.catalog.keyphrase(j.keyphrase_id), vocab, max_len)});
            }
            if (positives.empty()) throw DataError("irns training needs at least one positive pair");
            out.trace = train_bi(model, positives, tc);
        } else {
            std::vector<BiLabeledPair> pairs;
            for (const auto& j : labels) {
                pairs.push_back({encode_bi_item(world.catalog.item(j.item_id), vocab, max_len),
                                 encode_bi_keyphrase(world.catalog.keyphrase(j.keyphrase_id), vocab, max_len),
                                 j.label});
            }
            out.trace = train_bi(model, pairs, tc);
        }

        // calibrate the pass threshold on a held-out slice of the training labels
        if (cfg.model.threshold >= 0.0) {
            model.set_threshold(cfg.model.threshold);
        } else {
            auto held = labels;
            Rng rng(mix64(cfg.seed, 0xca11b8));
            rng.shuffle(held);
            const size_t n_val = std::max<size_t>(1, held.size() / 6);
            std::vector<std::pair<double, int>> scored;
            for (size_t i = 0; i < n_val && i < held.size(); ++i) {
                const auto& j = held[i];
                scored.emplace_back(
                    model.score_pair(encode_bi_item(world.catalog.item(j.item_id), vocab, max_len),
                                     encode_bi_keyphrase(world.catalog.keyphrase(j.keyphrase_id), vocab, max_len)),
                    j.label);
            }
            model.set_threshold(best_f1_threshold(scored));
        }
        out.model_version = model_version_of(model);
        out.bi = std::move(model);
        return out;
    }

    if (family == "cross-tiny" || family == "cross-mini") {
        auto cc = family == "cross-tiny" ? CrossEncoderConfig::tiny(vocab.size(), cfg.model.max_len, cfg.seed)
                                         : CrossEncoderConfig::mini(vocab.size(), cfg.model.max_len, cfg.seed);
        auto model = CrossEncoderModel::init(cc);
        model.set_vocab_hash(vocab.hash());
        std::vector<CrossExample> examples;
        examples.reserve(labels.size());
        for (const auto& j : labels) {
            examples.push_back({encode_cross_pair(world.catalog.keyphrase(j.keyphrase_id),
                                                  world.catalog.item(j.item_id), vocab, max_len),
                                j.label});
        }
        CrossTrainConfig tc;
        tc.epochs = cfg.train.epochs;
        tc.lr = cfg.train.lr > 0.0 ? cfg.train.lr : 1e-3;
        tc.batch_size = cfg.train.batch_size;
        tc.seed = cfg.seed;
        tc.threads = cfg.train.threads;
        out.trace = train_cross(model, examples, tc);
        if (cfg.model.threshold >= 0.0) model.set_threshold(cfg.model.threshold);
        out.model_version = model_version_of(model);
        out.cross = std::move(model);
        return out;
    }

    throw ConfigError("unknown model family: " + family +
                      " (expected bi-contrastive|bi-softmax|bi-irns|cross-tiny|cross-mini)");
}

void save_model_dir(const fs::path& dir, const TrainedModel& tm, const Vocab& vocab, const RunConfig& cfg,
                    const std::string& command, const std::vector<fs::path>& inputs) {
    fs::create_directories(dir);
    save_vocab(dir / "vocab.json", vocab);
    if (tm.bi) save_bi_checkpoint(dir / "checkpoint.json", *tm.bi);
    if (tm.cross) save_cross_checkpoint(dir / "checkpoint.json", *tm.cross);
    write_json_file(dir / "trace.json", json{{"epoch_loss", tm.trace.epoch_loss}});
    write_json_file(dir / "config.json", effective_config(cfg, command));
    write_run_manifest(dir, effective_config(cfg, command), cfg.seed, tm.model_version, inputs);
}

std::unique_ptr<RelevanceScorer> scorer_of(const TrainedModel& tm, const Vocab& vocab, const RunConfig& cfg) {
    if (tm.bi) return std::make_unique<BiEncoderScorer>(*tm.bi, vocab, cfg.model.max_len);
    return std::make_unique<CrossEncoderScorer>(*tm.cross, vocab, cfg.model.max_len, cfg.train.threads);
}

PRF1Report evaluate_scorer(const RelevanceScorer& scorer, const Catalog& catalog,
                           const std::vector<RelevanceJudgment>& judgments) {
    auto records = scorer.score_pairs(catalog, judgment_pairs(judgments), nullptr);
    std::vector<PairPrediction> preds;
    preds.reserve(records.size());
    for (const auto& r : records) preds.push_back({r.item_id, r.keyphrase_id, r.score, r.pass});
    return prf1(confusion(preds, judgments));
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_simulate(const RunConfig& cfg_in, const fs::path& out) {
    RunConfig cfg = cfg_in;
    require_seed(cfg);
    cfg.sim.seed = cfg.seed;
    cfg.sim.validate();

    const World world = gen_catalog(cfg.sim);
    const auto advertised = gen_advertised_pairs(world);
    const auto traffic = simulate_traffic(world, advertised, cfg.sim);
    const auto clicks = derive_click_dataset(traffic.records, cfg.sim);
    const auto judgments = derive_judgment_dataset(world, advertised, traffic, cfg.sim);
    const auto bias = measure_middleman_bias(clicks, world, traffic);

    fs::create_directories(out);
    write_items(out / "items.jsonl", world.items);
    write_keyphrases(out / "keyphrases.jsonl", world.keyphrases);
    write_pairs(out / "candidates.jsonl", advertised);
    write_click_log(out / "click_log.jsonl", traffic.records);
    write_click_log(out / "click_dataset.jsonl", clicks);
    write_judgments(out / "judgments_train.jsonl", judgments.train);
    write_judgments(out / "judgments_eval.jsonl", judgments.eval);

    json bias_json;
    bias_json["click_pairs"] = bias.click_pairs;
    bias_json["oracle_fail_in_click"] = bias.oracle_fail_in_click;
    bias_json["oracle_fail_fraction"] = bias.oracle_fail_fraction;
    bias_json["oracle_irrelevant_region"] = bias.oracle_irrelevant_region;
    bias_json["click_in_irrelevant_region"] = bias.click_in_irrelevant_region;
    bias_json["irrelevant_region_coverage"] = bias.irrelevant_region_coverage;
    json curve = json::array();
    for (const auto& p : bias.rank_ctr)
        curve.push_back({{"rank", p.rank}, {"impressions", p.impressions}, {"clicks", p.clicks}, {"ctr", p.ctr()}});
    bias_json["rank_ctr"] = curve;
    write_json_file(out / "bias_report.json", bias_json);

    const json config = effective_config(cfg, "simulate");
    write_json_file(out / "config.json", config);
    write_run_manifest(out, config, cfg.seed, "",
                       {out / "items.jsonl", out / "keyphrases.jsonl", out / "candidates.jsonl",
                        out / "click_log.jsonl", out / "click_dataset.jsonl", out / "judgments_train.jsonl",
                        out / "judgments_eval.jsonl"});

    std::printf("world written to %s\n", out.string().c_str());
    std::printf("  items=%d keyphrases=%d topics=%d candidates=%zu\n", cfg.sim.n_items, cfg.sim.n_keyphrases,
                cfg.sim.n_topics, advertised.size());
    std::printf("  click log records=%zu, click dataset (filtered)=%zu\n", traffic.records.size(), clicks.size());
    std::printf("  judgments train=%zu eval=%zu\n", judgments.train.size(), judgments.eval.size());
    std::printf("  middleman bias: oracle-fail fraction in click data = %.4f (count %zu)\n",
                bias.oracle_fail_fraction, bias.oracle_fail_in_click);
    std::printf("  irrelevant-region coverage by click data = %.4f over %zu oracle-rejected pairs\n",
                bias.irrelevant_region_coverage, bias.oracle_irrelevant_region);
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& world_dir, const fs::path& out, const std::string& family) {
    require_seed(cfg);
    const auto world = load_world_dir(world_dir);
    const Vocab vocab = vocab_for_catalog(world.catalog);

    std::vector<RelevanceJudgment> labels;
    if (cfg.train.data == "judgments") {
        labels = world.judgments_train;
    } else if (cfg.train.data == "clicks") {
        labels = click_training_labels(world, cfg.seed);
    } else {
        throw ConfigError("train.data must be 'judgments' or 'clicks'");
    }
    labels = cap_examples(std::move(labels), cfg.train.max_examples, cfg.seed);
    if (labels.empty()) throw DataError("no training examples available");

    auto tm = train_model(family, world, vocab, labels, cfg);
    save_model_dir(out, tm, vocab, cfg, "train",
                   {world_dir / "items.jsonl", world_dir / "keyphrases.jsonl",
                    world_dir / (cfg.train.data == "clicks" ? "click_dataset.jsonl" : "judgments_train.jsonl")});

    std::printf("trained %s on %zu examples (%s data) -> %s\n", family.c_str(), labels.size(),
                cfg.train.data.c_str(), out.string().c_str());
    std::printf("  model_version=%s\n", tm.model_version.c_str());
    for (size_t e = 0; e < tm.trace.epoch_loss.size(); ++e)
        std::printf("  epoch %zu: loss %.6f\n", e, tm.trace.epoch_loss[e]);
    return kExitOk;
}

int cmd_filter(const RunConfig& cfg, const fs::path& world_dir, const std::string& model_arg,
               const fs::path& out, const std::string& pairs_file) {
    const auto world = load_world_dir(world_dir);
    auto scorer = load_scorer(model_arg, cfg);
    std::vector<PairKey> pairs =
        pairs_file.empty() ? judgment_pairs(world.judgments_eval) : read_pairs(pairs_file);
    const auto records = scorer->score_pairs(world.catalog, pairs, nullptr);
    jsonl::write(out, records, [](const ScoreRecord& r) {
        return json{{"item_id", r.item_id}, {"keyphrase_id", r.keyphrase_id}, {"score", r.score}, {"pass", r.pass}};
    });
    write_json_file(fs::path(out.string() + ".meta.json"),
                    json{{"model_version", scorer->model_version()},
                         {"threshold", scorer->threshold()},
                         {"pairs", pairs.size()},
                         {"config", effective_config(cfg, "filter")}});
    size_t passed = 0;
    for (const auto& r : records) passed += r.pass;
    std::printf("filter %s: %zu/%zu pairs pass (threshold %.3f) -> %s\n", scorer->model_version().c_str(),
                passed, records.size(), scorer->threshold(), out.string().c_str());
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const fs::path& world_dir, const std::vector<std::string>& pred_files,
             const fs::path& out) {
    const auto world = load_world_dir(world_dir);
    json report;
    report["config"] = effective_config(cfg, "eval");
    json input_checksums = json::object();
    input_checksums["judgments_eval.jsonl"] = file_checksum_hex(world_dir / "judgments_eval.jsonl");
    for (const auto& file : pred_files) input_checksums[fs::path(file).filename().string()] = file_checksum_hex(file);
    report["input_checksums"] = input_checksums;
    report["models"] = json::object();
    bool gate_failed = false;
    std::printf("alignment vs Search judgments (%zu eval pairs)\n", world.judgments_eval.size());
    for (const auto& file : pred_files) {
        auto preds = jsonl::read(file, [](const json& j) {
            return PairPrediction{j.at("item_id").get<int64_t>(), j.at("keyphrase_id").get<int64_t>(),
                                  j.at("score").get<double>(), j.at("pass").get<bool>()};
        });
        std::string name = fs::path(file).filename().string();
        const fs::path meta(file + ".meta.json");
        if (fs::exists(meta)) name = read_json_file(meta).at("model_version").get<std::string>();
        const auto counts = confusion(preds, world.judgments_eval);
        const auto r = prf1(counts);
        auto breakdown = fn_length_breakdown(preds, world.judgments_eval, world.catalog.keyphrases);
        print_prf1_row(name, r);
        json jm = prf1_to_json(r);
        jm["confusion"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}, {"tn", counts.tn}};
        json fn_len = json::object();
        for (auto& [len, n] : breakdown) fn_len[std::to_string(len)] = n;
        jm["fn_by_keyphrase_length"] = fn_len;
        report["models"][name] = jm;
        if (cfg.eval.min_f1 >= 0.0 && r.f1 < cfg.eval.min_f1) gate_failed = true;
    }
    if (!out.empty()) write_json_file(out, report);
    if (cfg.eval.min_f1 >= 0.0) {
        std::printf("  min-F1 gate at %.3f: %s\n", cfg.eval.min_f1, gate_failed ? "FAILED" : "ok");
        if (gate_failed) return kExitGateFailure;
    }
    return kExitOk;
}

int cmd_batch(const RunConfig& cfg, const fs::path& world_dir, const std::string& model_arg, const fs::path& out,
              const std::string& candidates_file) {
    const auto world = load_world_dir(world_dir);
    auto scorer = load_scorer(model_arg, cfg);
    PairSource source(candidates_file.empty() ? world.candidates : read_pairs(candidates_file));
    ScoringCounters counters;
    auto store = batch_score_full(*scorer, world.catalog, source, out, &counters);
    write_json_file(fs::path(out.string() + ".run.json"),
                    json{{"config", effective_config(cfg, "batch")},
                         {"model_version", scorer->model_version()},
                         {"pairs", source.size()},
                         {"encodes", counters.encodes.load()},
                         {"forwards", counters.forwards.load()},
                         {"checksum", store.checksum_hex()}});
    std::printf("full batch: %zu pairs -> %s (checksum %s)\n", source.size(), out.string().c_str(),
                store.checksum_hex().c_str());
    std::printf("  encodes=%llu forwards=%llu model=%s\n",
                static_cast<unsigned long long>(counters.encodes.load()),
                static_cast<unsigned long long>(counters.forwards.load()), scorer->model_version().c_str());
    return kExitOk;
}

int cmd_diff(const RunConfig& cfg, const fs::path& world_dir, const std::string& model_arg,
             const fs::path& store_dir, const fs::path& events_file, const std::string& candidates_file) {
    auto world = load_world_dir(world_dir);
    auto scorer = load_scorer(model_arg, cfg);
    auto store = ScoreStore::open(store_dir);
    PairSource source(candidates_file.empty() ? world.candidates : read_pairs(candidates_file));

    auto events = jsonl::read(events_file, [](const json& j) { return parse_event(j); });
    std::vector<int64_t> changed_items, new_kps;
    for (const auto& ev : events) {
        if (ev.kind == CatalogEvent::Kind::kKeyphraseCreated) {
            auto* kp = world.catalog.find_keyphrase(ev.id);
            if (!kp) throw DataError("diff: unknown keyphrase id " + std::to_string(ev.id));
            kp->updated_at_ms = std::max(kp->updated_at_ms, ev.event_time_ms);
            new_kps.push_back(ev.id);
        } else {
            auto* item = world.catalog.find_item(ev.id);
            if (!item) throw DataError("diff: unknown item id " + std::to_string(ev.id));
            item->updated_at_ms = std::max(item->updated_at_ms, ev.event_time_ms);
            changed_items.push_back(ev.id);
        }
    }
    ScoringCounters counters;
    batch_score_diff(store, *scorer, world.catalog, changed_items, new_kps, source, &counters);
    write_json_file(fs::path(store_dir.string() + ".diff.run.json"),
                    json{{"config", effective_config(cfg, "diff")},
                         {"model_version", scorer->model_version()},
                         {"events", events.size()},
                         {"changed_items", changed_items.size()},
                         {"new_keyphrases", new_kps.size()},
                         {"input_checksums",
                          json{{"events", file_checksum_hex(events_file)},
                               {"items", file_checksum_hex(world_dir / "items.jsonl")},
                               {"keyphrases", file_checksum_hex(world_dir / "keyphrases.jsonl")}}},
                         {"checksum", store.checksum_hex()}});
    std::printf("diff: %zu events (%zu items changed, %zu keyphrases new) -> %s (checksum %s)\n", events.size(),
                changed_items.size(), new_kps.size(), store_dir.string().c_str(), store.checksum_hex().c_str());
    return kExitOk;
}

int cmd_serve(const RunConfig& cfg, const fs::path& world_dir, const std::string& model_arg,
              const fs::path& store_dir) {
    auto world = load_world_dir(world_dir);
    auto scorer = load_scorer(model_arg, cfg);
    PairSource source(world.candidates);
    ScoreStore store = fs::exists(store_dir / "manifest.json")
                           ? ScoreStore::open(store_dir)
                           : ScoreStore::create(store_dir, scorer->model_version());
    if (store.model_version() != scorer->model_version())
        throw DataError("version mismatch - full rebuild required (store " + store.model_version() + ", model " +
                        scorer->model_version() + ")");
    NrtPipeline pipeline(world.catalog, *scorer, source, store, cfg.serve.window_ms);
    NrtService service(pipeline, store);
    const int port = service.start(cfg.serve.host, cfg.serve.port);
    std::printf("nrt service on %s:%d (window %d ms, model %s)\n", cfg.serve.host.c_str(), port,
                cfg.serve.window_ms, scorer->model_version().c_str());
    std::fflush(stdout);
    if (cfg.serve.run_for_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(cfg.serve.run_for_ms));
    } else {
        for (;;) std::this_thread::sleep_for(std::chrono::hours(24));
    }
    service.stop();
    return kExitOk;
}

int cmd_bench(const RunConfig& cfg_in, const fs::path& out) {
    RunConfig cfg = cfg_in;
    require_seed(cfg);
    cfg.bench.seed = cfg.seed;
    const auto report = bench_throughput(cfg.bench);
    json j{{"family", report.family},
           {"n_items", report.n_items},
           {"n_keyphrases", report.n_keyphrases},
           {"n_pairs", report.n_pairs},
           {"encodes", report.encodes},
           {"forwards", report.forwards},
           {"wall_ms_median", report.wall_ms_median},
           {"pairs_per_sec", report.pairs_per_sec},
           {"wall_ms_runs", report.wall_ms_runs},
           {"config", effective_config(cfg, "bench")}};
    if (!out.empty()) write_json_file(out, j);
    std::printf("bench %s: items=%d keyphrases=%d pairs=%d\n", report.family.c_str(), report.n_items,
                report.n_keyphrases, report.n_pairs);
    std::printf("  encodes=%llu forwards=%llu\n", static_cast<unsigned long long>(report.encodes),
                static_cast<unsigned long long>(report.forwards));
    std::printf("  wall median %.1f ms over %zu repeats -> %.0f pairs/sec\n", report.wall_ms_median,
                report.wall_ms_runs.size(), report.pairs_per_sec);
    return kExitOk;
}

// The canonical bias study: one world, one architecture, two training
// signals; alignment measured against the Search oracle's judgments.
int cmd_experiment(const RunConfig& cfg_in, const fs::path& out) {
    RunConfig cfg = cfg_in;
    require_seed(cfg);
    cfg.sim.seed = cfg.seed;
    cfg.sim.validate();

    std::printf("simulating world (items=%d keyphrases=%d noise=%.2f seed=%llu)\n", cfg.sim.n_items,
                cfg.sim.n_keyphrases, cfg.sim.search_noise, static_cast<unsigned long long>(cfg.seed));
    const World world = gen_catalog(cfg.sim);
    const auto advertised = gen_advertised_pairs(world);
    const auto traffic = simulate_traffic(world, advertised, cfg.sim);
    const auto clicks = derive_click_dataset(traffic.records, cfg.sim);
    const auto judgments = derive_judgment_dataset(world, advertised, traffic, cfg.sim);

    WorldDir w;
    w.catalog = Catalog::from_world(world);
    w.candidates = advertised;
    w.judgments_train = judgments.train;
    w.judgments_eval = judgments.eval;
    w.click_dataset = clicks;
    const Vocab vocab = vocab_for_catalog(w.catalog);

    auto judgment_labels = cap_examples(judgments.train, cfg.train.max_examples, cfg.seed);
    auto click_labels = cap_examples(click_training_labels(w, cfg.seed), cfg.train.max_examples, cfg.seed);

    std::printf("training cross-tiny on %zu judgment labels...\n", judgment_labels.size());
    auto judgment_model = train_model("cross-tiny", w, vocab, judgment_labels, cfg);
    std::printf("training cross-tiny on %zu click-derived labels (%zu positives)...\n", click_labels.size(),
                clicks.size());
    auto click_model = train_model("cross-tiny", w, vocab, click_labels, cfg);

    const auto judgment_scorer = scorer_of(judgment_model, vocab, cfg);
    const auto click_scorer = scorer_of(click_model, vocab, cfg);
    const JaccardScorer jaccard_scorer(cfg.jaccard);

    const auto r_judgment = evaluate_scorer(*judgment_scorer, w.catalog, judgments.eval);
    const auto r_click = evaluate_scorer(*click_scorer, w.catalog, judgments.eval);
    const auto r_jaccard = evaluate_scorer(jaccard_scorer, w.catalog, judgments.eval);

    std::printf("\nalignment with the Search oracle on %zu held-out pairs:\n", judgments.eval.size());
    print_prf1_row("cross-tiny (judgment data)", r_judgment);
    print_prf1_row("cross-tiny (click data)", r_click);
    print_prf1_row("jaccard baseline", r_jaccard);
    const double gap = r_judgment.f1 - r_click.f1;
    std::printf("\njudgment-trained minus click-trained F1: %+.4f\n", gap);

    fs::create_directories(out);
    save_model_dir(out / "model_judgment", judgment_model, vocab, cfg, "experiment", {});
    save_model_dir(out / "model_click", click_model, vocab, cfg, "experiment", {});
    json report;
    report["config"] = effective_config(cfg, "experiment");
    report["judgment_trained"] = prf1_to_json(r_judgment);
    report["click_trained"] = prf1_to_json(r_click);
    report["jaccard"] = prf1_to_json(r_jaccard);
    report["f1_gap_judgment_minus_click"] = gap;
    report["train_sizes"] = {{"judgment", judgment_labels.size()},
                             {"click", click_labels.size()},
                             {"click_positives", clicks.size()}};
    write_json_file(out / "report.json", report);
    write_json_file(out / "config.json", effective_config(cfg, "experiment"));
    write_run_manifest(out, effective_config(cfg, "experiment"), cfg.seed, judgment_model.model_version, {});
    std::printf("report written to %s\n", (out / "report.json").string().c_str());
    return kExitOk;
}

void add_common_flags(CLI::App* cmd, RunConfig& cfg, bool& seed_flag_set, uint64_t& seed_value,
                      std::string& config_file) {
    cmd->add_option("--config", config_file, "JSON config file (flags override it; already applied)");
    cmd->add_option("--seed", seed_value, "master random seed")->each([&](const std::string&) {
        seed_flag_set = true;
    });
    cmd->add_option("--sim.n-items", cfg.sim.n_items);
    cmd->add_option("--sim.n-keyphrases", cfg.sim.n_keyphrases);
    cmd->add_option("--sim.n-topics", cfg.sim.n_topics);
    cmd->add_option("--sim.search-noise", cfg.sim.search_noise);
    cmd->add_option("--sim.position-decay", cfg.sim.position_decay);
    cmd->add_option("--sim.base-click-prob", cfg.sim.base_click_prob);
    cmd->add_option("--sim.impressions-per-auction", cfg.sim.impressions_per_auction);
    cmd->add_option("--sim.min-impressions", cfg.sim.min_impressions);
    cmd->add_option("--sim.min-ctr", cfg.sim.min_ctr);
    cmd->add_option("--sim.min-clicks", cfg.sim.min_clicks);
    cmd->add_option("--sim.auction-rounds", cfg.sim.auction_rounds);
    cmd->add_option("--sim.irrelevant-click-floor", cfg.sim.irrelevant_click_floor);
    cmd->add_option("--sim.sale-prob", cfg.sim.sale_prob);
    cmd->add_option("--sim.cross-category-candidate-frac", cfg.sim.cross_category_candidate_frac);
    cmd->add_option("--sim.synonym-keyphrase-frac", cfg.sim.synonym_keyphrase_frac);
    cmd->add_option("--sim.title-derived-keyphrase-frac", cfg.sim.title_derived_keyphrase_frac);
    cmd->add_option("--sim.judgment-floor-per-topic", cfg.sim.judgment_floor_per_topic);
    cmd->add_option("--sim.judgment-total", cfg.sim.judgment_total);
    cmd->add_option("--sim.judgment-eval-frac", cfg.sim.judgment_eval_frac);
    cmd->add_option("--train.data", cfg.train.data, "judgments | clicks");
    cmd->add_option("--train.epochs", cfg.train.epochs);
    cmd->add_option("--train.lr", cfg.train.lr);
    cmd->add_option("--train.batch-size", cfg.train.batch_size);
    cmd->add_option("--train.margin", cfg.train.margin);
    cmd->add_option("--train.temperature", cfg.train.temperature);
    cmd->add_option("--train.threads", cfg.train.threads);
    cmd->add_option("--train.max-examples", cfg.train.max_examples);
    cmd->add_option("--model.dim", cfg.model.dim);
    cmd->add_option("--model.max-len", cfg.model.max_len);
    cmd->add_option("--model.threshold", cfg.model.threshold);
    cmd->add_option("--jaccard.threshold", cfg.jaccard.threshold);
    cmd->add_flag("--jaccard.use-category-tokens", cfg.jaccard.use_category_tokens);
    cmd->add_option("--serve.host", cfg.serve.host);
    cmd->add_option("--serve.port", cfg.serve.port);
    cmd->add_option("--serve.window-ms", cfg.serve.window_ms);
    cmd->add_option("--serve.run-for-ms", cfg.serve.run_for_ms);
    cmd->add_option("--bench.family", cfg.bench.family);
    cmd->add_option("--bench.n-items", cfg.bench.n_items);
    cmd->add_option("--bench.n-keyphrases", cfg.bench.n_keyphrases);
    cmd->add_option("--bench.n-pairs", cfg.bench.n_pairs);
    cmd->add_option("--bench.repeats", cfg.bench.repeats);
    cmd->add_option("--bench.max-len", cfg.bench.max_len);
    cmd->add_option("--bench.threads", cfg.bench.threads);
    cmd->add_option("--eval.min-f1", cfg.eval.min_f1);
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig cfg;
    // the config file loads first so explicit flags override it
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        try {
            if (arg == "--config" && i + 1 < argc) {
                apply_config_file(cfg, argv[i + 1]);
            } else if (arg.rfind("--config=", 0) == 0) {
                apply_config_file(cfg, arg.substr(9));
            }
        } catch (const ConfigError& e) {
            std::fprintf(stderr, "config error: %s\n", e.what());
            return kExitConfigError;
        } catch (const DataError& e) {
            std::fprintf(stderr, "data error: %s\n", e.what());
            return kExitDataError;
        }
    }

    CLI::App app{"advertiser keyphrase relevance alignment toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");
    std::string config_file;

    uint64_t seed_value = 0;
    bool seed_flag_set = false;
    std::string world_dir, out_path, model_arg, pairs_file, candidates_file, events_file, store_dir;
    std::vector<std::string> pred_files;

    auto* sim = app.add_subcommand("simulate", "generate a synthetic marketplace world");
    sim->add_option("--out", out_path, "world output directory")->required();
    add_common_flags(sim, cfg, seed_flag_set, seed_value, config_file);

    auto* train = app.add_subcommand("train", "train a relevance filter on a world");
    train->add_option("--world", world_dir)->required();
    train->add_option("--out", out_path)->required();
    train->add_option("--model", model_arg, "bi-contrastive|bi-softmax|bi-irns|cross-tiny|cross-mini")->required();
    add_common_flags(train, cfg, seed_flag_set, seed_value, config_file);

    auto* filter = app.add_subcommand("filter", "score pairs with a model or the jaccard baseline");
    filter->add_option("--world", world_dir)->required();
    filter->add_option("--model", model_arg, "jaccard or a trained model directory")->required();
    filter->add_option("--out", out_path)->required();
    filter->add_option("--pairs", pairs_file, "explicit pair list (default: world eval pairs)");
    add_common_flags(filter, cfg, seed_flag_set, seed_value, config_file);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate predictions against Search judgments");
    eval_cmd->add_option("--world", world_dir)->required();
    eval_cmd->add_option("--preds", pred_files, "prediction files from `filter`")->required();
    eval_cmd->add_option("--out", out_path, "JSON report path");
    add_common_flags(eval_cmd, cfg, seed_flag_set, seed_value, config_file);

    auto* batch = app.add_subcommand("batch", "full batch scoring into a score store");
    batch->add_option("--world", world_dir)->required();
    batch->add_option("--model", model_arg)->required();
    batch->add_option("--out", out_path, "store directory")->required();
    batch->add_option("--candidates", candidates_file);
    add_common_flags(batch, cfg, seed_flag_set, seed_value, config_file);

    auto* diff = app.add_subcommand("diff", "incremental scoring pass merged into an existing store");
    diff->add_option("--world", world_dir)->required();
    diff->add_option("--model", model_arg)->required();
    diff->add_option("--store", store_dir)->required();
    diff->add_option("--events", events_file, "JSONL catalog events")->required();
    diff->add_option("--candidates", candidates_file);
    add_common_flags(diff, cfg, seed_flag_set, seed_value, config_file);

    auto* serve = app.add_subcommand("serve", "near-real-time scoring service");
    serve->add_option("--world", world_dir)->required();
    serve->add_option("--model", model_arg)->required();
    serve->add_option("--store", store_dir)->required();
    add_common_flags(serve, cfg, seed_flag_set, seed_value, config_file);

    auto* bench = app.add_subcommand("bench", "throughput benchmark");
    bench->add_option("--out", out_path, "JSON report path");
    add_common_flags(bench, cfg, seed_flag_set, seed_value, config_file);

    auto* experiment = app.add_subcommand("experiment", "the canonical middleman-bias study");
    experiment->add_option("--out", out_path)->required();
    add_common_flags(experiment, cfg, seed_flag_set, seed_value, config_file);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfigError;
    }

    if (seed_flag_set) {
        cfg.seed = seed_value;
        cfg.seed_set = true;
    }

    try {
        if (sim->parsed()) return cmd_simulate(cfg, out_path);
        if (train->parsed()) return cmd_train(cfg, world_dir, out_path, model_arg);
        if (filter->parsed()) return cmd_filter(cfg, world_dir, model_arg, out_path, pairs_file);
        if (eval_cmd->parsed()) return cmd_eval(cfg, world_dir, pred_files, out_path);
        if (batch->parsed()) return cmd_batch(cfg, world_dir, model_arg, out_path, candidates_file);
        if (diff->parsed()) return cmd_diff(cfg, world_dir, model_arg, store_dir, events_file, candidates_file);
        if (serve->parsed()) return cmd_serve(cfg, world_dir, model_arg, store_dir);
        if (bench->parsed()) return cmd_bench(cfg, out_path);
        if (experiment->parsed()) return cmd_experiment(cfg, out_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfigError;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitDataError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDataError;
    }
    return kExitConfigError;
}
