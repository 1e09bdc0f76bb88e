// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "kpalign/common.hpp"
#include "kpalign/eval.hpp"
#include "kpalign/sim.hpp"
#include "kpalign/text.hpp"

namespace kpalign {

using nlohmann::json;

// Serving-side view of the entity universe; the enrichment source for NRT
// events and the input to batch scoring.
struct Catalog {
    std::vector<ItemDoc> items;
    std::vector<Keyphrase> keyphrases;
    std::unordered_map<int64_t, size_t> item_index;
    std::unordered_map<int64_t, size_t> kp_index;

    void rebuild_index() {
        item_index.clear();
        kp_index.clear();
        for (size_t i = 0; i < items.size(); ++i) {
            if (!item_index.emplace(items[i].item_id, i).second)
                throw DataError("catalog: duplicate item id " + std::to_string(items[i].item_id));
        }
        for (size_t j = 0; j < keyphrases.size(); ++j) {
            if (!kp_index.emplace(keyphrases[j].keyphrase_id, j).second)
                throw DataError("catalog: duplicate keyphrase id " + std::to_string(keyphrases[j].keyphrase_id));
        }
    }

    ItemDoc* find_item(int64_t id) {
        auto it = item_index.find(id);
        return it == item_index.end() ? nullptr : &items[it->second];
    }
    const ItemDoc* find_item(int64_t id) const { return const_cast<Catalog*>(this)->find_item(id); }

    Keyphrase* find_keyphrase(int64_t id) {
        auto it = kp_index.find(id);
        return it == kp_index.end() ? nullptr : &keyphrases[it->second];
    }
    const Keyphrase* find_keyphrase(int64_t id) const { return const_cast<Catalog*>(this)->find_keyphrase(id); }

    const ItemDoc& item(int64_t id) const {
        const auto* p = find_item(id);
        if (!p) throw DataError("catalog: unknown item id " + std::to_string(id));
        return *p;
    }

    const Keyphrase& keyphrase(int64_t id) const {
        const auto* p = find_keyphrase(id);
        if (!p) throw DataError("catalog: unknown keyphrase id " + std::to_string(id));
        return *p;
    }

    static Catalog from_world(const World& w) {
        Catalog c;
        c.items = w.items;
        c.keyphrases = w.keyphrases;
        c.rebuild_index();
        return c;
    }
};

// ---------------------------------------------------------------------------
// Line-delimited JSON files. One object per line, UTF-8, field names match
// the domain types.

namespace jsonl {

inline json item_to_json(const ItemDoc& it) {
    return json{{"item_id", it.item_id},
                {"title", it.title},
                {"category_id", it.category_id},
                {"category_name", it.category_name},
                {"updated_at_ms", it.updated_at_ms}};
}

inline ItemDoc item_from_json(const json& j) {
    ItemDoc it;
    it.item_id = j.at("item_id").get<int64_t>();
    it.title = j.at("title").get<std::string>();
    it.category_id = j.at("category_id").get<int64_t>();
    it.category_name = j.at("category_name").get<std::string>();
    it.updated_at_ms = j.value("updated_at_ms", int64_t{0});
    return it;
}

inline json keyphrase_to_json(const Keyphrase& kp) {
    return json{{"keyphrase_id", kp.keyphrase_id}, {"text", kp.text}, {"updated_at_ms", kp.updated_at_ms}};
}

inline Keyphrase keyphrase_from_json(const json& j) {
    Keyphrase kp;
    kp.keyphrase_id = j.at("keyphrase_id").get<int64_t>();
    kp.text = j.at("text").get<std::string>();
    kp.updated_at_ms = j.value("updated_at_ms", int64_t{0});
    return kp;
}

template <typename T, typename ToJson>
void write(const std::filesystem::path& path, const std::vector<T>& rows, ToJson to_json_fn) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for write: " + path.string());
    for (const auto& row : rows) out << to_json_fn(row).dump() << '\n';
}

template <typename FromJson>
auto read(const std::filesystem::path& path, FromJson from_json_fn)
    -> std::vector<decltype(from_json_fn(json{}))> {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for read: " + path.string());
    std::vector<decltype(from_json_fn(json{}))> rows;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            rows.push_back(from_json_fn(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

}  // namespace jsonl

inline void write_items(const std::filesystem::path& p, const std::vector<ItemDoc>& v) {
    jsonl::write(p, v, jsonl::item_to_json);
}
inline std::vector<ItemDoc> read_items(const std::filesystem::path& p) {
    return jsonl::read(p, jsonl::item_from_json);
}

inline void write_keyphrases(const std::filesystem::path& p, const std::vector<Keyphrase>& v) {
    jsonl::write(p, v, jsonl::keyphrase_to_json);
}
inline std::vector<Keyphrase> read_keyphrases(const std::filesystem::path& p) {
    return jsonl::read(p, jsonl::keyphrase_from_json);
}

inline void write_pairs(const std::filesystem::path& p, const std::vector<PairKey>& v) {
    jsonl::write(p, v, [](const PairKey& k) {
        return json{{"item_id", k.item_id}, {"keyphrase_id", k.keyphrase_id}};
    });
}
inline std::vector<PairKey> read_pairs(const std::filesystem::path& p) {
    return jsonl::read(p, [](const json& j) {
        return PairKey{j.at("item_id").get<int64_t>(), j.at("keyphrase_id").get<int64_t>()};
    });
}

inline void write_judgments(const std::filesystem::path& p, const std::vector<RelevanceJudgment>& v) {
    jsonl::write(p, v, [](const RelevanceJudgment& j) {
        return json{{"item_id", j.item_id}, {"keyphrase_id", j.keyphrase_id}, {"label", j.label}};
    });
}
inline std::vector<RelevanceJudgment> read_judgments(const std::filesystem::path& p) {
    return jsonl::read(p, [](const json& j) {
        return RelevanceJudgment{j.at("item_id").get<int64_t>(), j.at("keyphrase_id").get<int64_t>(),
                                 j.at("label").get<int>()};
    });
}

inline void write_click_log(const std::filesystem::path& p, const std::vector<ClickLogRecord>& v) {
    jsonl::write(p, v, [](const ClickLogRecord& r) {
        return json{{"item_id", r.item_id},
                    {"keyphrase_id", r.keyphrase_id},
                    {"impressions", r.impressions},
                    {"clicks", r.clicks},
                    {"sales", r.sales}};
    });
}
inline std::vector<ClickLogRecord> read_click_log(const std::filesystem::path& p) {
    return jsonl::read(p, [](const json& j) {
        return ClickLogRecord{j.at("item_id").get<int64_t>(), j.at("keyphrase_id").get<int64_t>(),
                              j.at("impressions").get<int64_t>(), j.at("clicks").get<int64_t>(),
                              j.at("sales").get<int64_t>()};
    });
}

// ---------------------------------------------------------------------------
// Small JSON file helpers and run manifests.

inline void write_json_file(const std::filesystem::path& p, const json& j) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for write: " + p.string());
    out << j.dump(2) << '\n';
}

inline json read_json_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open for read: " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(p.string() + ": " + e.what());
    }
}

inline std::string file_checksum_hex(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open for checksum: " + p.string());
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
    return hex16(h);
}

// Every run directory gets one of these: enough to reproduce outputs exactly.
inline void write_run_manifest(const std::filesystem::path& dir, const json& config, uint64_t seed,
                               const std::string& model_version,
                               const std::vector<std::filesystem::path>& inputs) {
    json manifest;
    manifest["config"] = config;
    manifest["seed"] = seed;
    if (!model_version.empty()) manifest["model_version"] = model_version;
    json checksums = json::object();
    for (const auto& in : inputs) checksums[in.filename().string()] = file_checksum_hex(in);
    manifest["input_checksums"] = checksums;
    write_json_file(dir / "manifest.json", manifest);
}

}  // namespace kpalign
