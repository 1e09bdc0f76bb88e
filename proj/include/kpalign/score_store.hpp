// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "kpalign/catalog.hpp"
#include "kpalign/common.hpp"

namespace kpalign {

// One live score per (item_id, keyphrase_id). model_version is store-wide
// (stores are version-pure); updated_at is the catalog-derived logical time
// used for last-write-wins merging.
struct ScoreRecord {
    int64_t item_id = 0;
    int64_t keyphrase_id = 0;
    double score = 0.0;
    bool pass = false;
    std::string model_version;
    int64_t updated_at = 0;
};

// Segment file byte layout (little-endian), version field first:
//   header : u32 format_version | u32 record_size (= 40) | u64 record_count
//   records: record_count entries sorted by (item_id, keyphrase_id)
//   record : i64 item_id | i64 keyphrase_id | f64 score | u8 pass | u8[7] zero | i64 updated_at
// The manifest (manifest.json) carries model_version, total count, the
// FNV-1a64 checksum over all record bytes, and the segment list. Segment
// files are named by their checksum, so identical contents mean identical
// directories.
class ScoreStore {
public:
    static constexpr uint32_t kFormatVersion = 1;
    static constexpr uint32_t kRecordSize = 40;

    struct StoredRecord {
        int64_t item_id = 0;
        int64_t keyphrase_id = 0;
        double score = 0.0;
        bool pass = false;
        int64_t updated_at = 0;

        PairKey key() const { return {item_id, keyphrase_id}; }
    };

    static ScoreStore create(const std::filesystem::path& dir, const std::string& model_version) {
        std::filesystem::create_directories(dir);
        ScoreStore store;
        store.dir_ = dir;
        store.model_version_ = model_version;
        store.persist_locked();
        return store;
    }

    static ScoreStore open(const std::filesystem::path& dir) {
        ScoreStore store;
        store.dir_ = dir;
        const json manifest = read_json_file(dir / "manifest.json");
        if (manifest.at("format_version").get<uint32_t>() != kFormatVersion)
            throw DataError("score store: unsupported format version in " + dir.string());
        store.model_version_ = manifest.at("model_version").get<std::string>();
        for (const auto& seg : manifest.at("segments")) {
            const auto file = dir / seg.at("file").get<std::string>();
            auto records = read_segment(file);
            if (records.size() != seg.at("count").get<size_t>())
                throw DataError("score store: segment count mismatch in " + file.string());
            if (checksum_of(records) != seg.at("checksum").get<std::string>())
                throw DataError("score store: segment checksum mismatch in " + file.string());
            store.records_.insert(store.records_.end(), records.begin(), records.end());
        }
        if (store.records_.size() != manifest.at("count").get<size_t>())
            throw DataError("score store: manifest count mismatch in " + dir.string());
        if (checksum_of(store.records_) != manifest.at("checksum").get<std::string>())
            throw DataError("score store: manifest checksum mismatch in " + dir.string());
        for (size_t i = 1; i < store.records_.size(); ++i) {
            if (!(store.records_[i - 1].key() < store.records_[i].key()))
                throw DataError("score store: records out of order in " + dir.string());
        }
        return store;
    }

    const std::filesystem::path& dir() const { return dir_; }
    const std::string& model_version() const { return model_version_; }

    size_t size() const {
        std::shared_lock lock(*mutex_);
        return records_.size();
    }

    std::string checksum_hex() const {
        std::shared_lock lock(*mutex_);
        return checksum_of(records_);
    }

    std::optional<ScoreRecord> lookup(PairKey key) const {
        std::shared_lock lock(*mutex_);
        auto it = std::lower_bound(records_.begin(), records_.end(), key,
                                   [](const StoredRecord& r, PairKey k) { return r.key() < k; });
        if (it == records_.end() || !(it->key() == key)) return std::nullopt;
        return ScoreRecord{it->item_id, it->keyphrase_id, it->score, it->pass, model_version_, it->updated_at};
    }

    std::vector<StoredRecord> records() const {
        std::shared_lock lock(*mutex_);
        return records_;
    }

    // Last-write-wins merge, applied atomically: readers see either the old
    // or the fully merged state. drop_item_ids removes every existing record
    // for those items before the upserts land (stale pairs of revised items).
    void merge(const std::vector<ScoreRecord>& upserts, const std::vector<int64_t>& drop_item_ids = {}) {
        for (const auto& r : upserts) {
            if (r.model_version != model_version_)
                throw DataError("score store merge: model_version mismatch (store " + model_version_ +
                                ", record " + r.model_version + ")");
        }
        std::vector<StoredRecord> incoming;
        incoming.reserve(upserts.size());
        for (const auto& r : upserts)
            incoming.push_back({r.item_id, r.keyphrase_id, r.score, r.pass, r.updated_at});
        std::sort(incoming.begin(), incoming.end(),
                  [](const StoredRecord& a, const StoredRecord& b) { return a.key() < b.key(); });
        // collapse duplicate keys inside the batch by the same LWW rule
        std::vector<StoredRecord> batch;
        for (const auto& r : incoming) {
            if (!batch.empty() && batch.back().key() == r.key()) {
                if (wins_over(r, batch.back())) batch.back() = r;
            } else {
                batch.push_back(r);
            }
        }

        std::unordered_set<int64_t> drops(drop_item_ids.begin(), drop_item_ids.end());
        std::unique_lock lock(*mutex_);
        std::vector<StoredRecord> merged;
        merged.reserve(records_.size() + batch.size());
        size_t i = 0, j = 0;
        auto keep_existing = [&](const StoredRecord& r) { return drops.find(r.item_id) == drops.end(); };
        while (i < records_.size() && j < batch.size()) {
            if (records_[i].key() < batch[j].key()) {
                if (keep_existing(records_[i])) merged.push_back(records_[i]);
                ++i;
            } else if (batch[j].key() < records_[i].key()) {
                merged.push_back(batch[j++]);
            } else {
                merged.push_back(wins_over(batch[j], records_[i]) ? batch[j] : records_[i]);
                ++i;
                ++j;
            }
        }
        for (; i < records_.size(); ++i)
            if (keep_existing(records_[i])) merged.push_back(records_[i]);
        for (; j < batch.size(); ++j) merged.push_back(batch[j]);
        records_ = std::move(merged);
        persist_locked();
    }

    // Byte-level equality of two store directories (manifest + segments).
    static bool directories_equal(const std::filesystem::path& a, const std::filesystem::path& b) {
        auto list = [](const std::filesystem::path& dir) {
            std::vector<std::filesystem::path> files;
            for (const auto& e : std::filesystem::directory_iterator(dir)) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            return files;
        };
        auto fa = list(a), fb = list(b);
        if (fa.size() != fb.size()) return false;
        for (size_t i = 0; i < fa.size(); ++i) {
            if (fa[i].filename() != fb[i].filename()) return false;
            if (file_checksum_hex(fa[i]) != file_checksum_hex(fb[i])) return false;
        }
        return true;
    }

private:
    // Later logical time wins; ties resolve deterministically on content.
    static bool wins_over(const StoredRecord& cand, const StoredRecord& cur) {
        if (cand.updated_at != cur.updated_at) return cand.updated_at > cur.updated_at;
        const auto bits = [](double d) { return std::bit_cast<uint64_t>(d); };
        if (bits(cand.score) != bits(cur.score)) return bits(cand.score) > bits(cur.score);
        return cand.pass && !cur.pass;
    }

    static void put_u32(std::string& buf, uint32_t v) {
        for (int k = 0; k < 4; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
    }
    static void put_u64(std::string& buf, uint64_t v) {
        for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
    }
    static uint32_t get_u32(const char* p) {
        uint32_t v = 0;
        for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(p[k]);
        return v;
    }
    static uint64_t get_u64(const char* p) {
        uint64_t v = 0;
        for (int k = 7; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(p[k]);
        return v;
    }

    static std::string record_bytes(const std::vector<StoredRecord>& records) {
        std::string buf;
        buf.reserve(records.size() * kRecordSize);
        for (const auto& r : records) {
            put_u64(buf, static_cast<uint64_t>(r.item_id));
            put_u64(buf, static_cast<uint64_t>(r.keyphrase_id));
            put_u64(buf, std::bit_cast<uint64_t>(r.score));
            buf.push_back(r.pass ? 1 : 0);
            for (int k = 0; k < 7; ++k) buf.push_back(0);
            put_u64(buf, static_cast<uint64_t>(r.updated_at));
        }
        return buf;
    }

    static std::string checksum_of(const std::vector<StoredRecord>& records) {
        const std::string bytes = record_bytes(records);
        return hex16(fnv1a64(bytes.data(), bytes.size()));
    }

    static std::vector<StoredRecord> read_segment(const std::filesystem::path& file) {
        std::ifstream in(file, std::ios::binary);
        if (!in) throw DataError("score store: cannot open segment " + file.string());
        char header[16];
        if (!in.read(header, sizeof header)) throw DataError("score store: truncated header in " + file.string());
        if (get_u32(header) != kFormatVersion)
            throw DataError("score store: unsupported segment version in " + file.string());
        if (get_u32(header + 4) != kRecordSize)
            throw DataError("score store: unexpected record size in " + file.string());
        const uint64_t count = get_u64(header + 8);
        std::vector<StoredRecord> records;
        records.reserve(count);
        std::vector<char> buf(kRecordSize);
        for (uint64_t n = 0; n < count; ++n) {
            if (!in.read(buf.data(), kRecordSize))
                throw DataError("score store: truncated segment " + file.string());
            StoredRecord r;
            r.item_id = static_cast<int64_t>(get_u64(buf.data()));
            r.keyphrase_id = static_cast<int64_t>(get_u64(buf.data() + 8));
            r.score = std::bit_cast<double>(get_u64(buf.data() + 16));
            r.pass = buf[24] != 0;
            r.updated_at = static_cast<int64_t>(get_u64(buf.data() + 32));
            records.push_back(r);
        }
        return records;
    }

    // Rewrites the store as one compacted, content-addressed segment plus the
    // manifest. Caller holds the write lock (or exclusive construction).
    void persist_locked() const {
        json manifest;
        manifest["format_version"] = kFormatVersion;
        manifest["model_version"] = model_version_;
        manifest["count"] = records_.size();
        const std::string checksum = checksum_of(records_);
        manifest["checksum"] = checksum;
        manifest["segments"] = json::array();

        std::vector<std::filesystem::path> stale;
        for (const auto& e : std::filesystem::directory_iterator(dir_)) {
            if (e.path().extension() == ".seg") stale.push_back(e.path());
        }

        std::filesystem::path seg_name;
        if (!records_.empty()) {
            seg_name = "segment-" + checksum + ".seg";
            std::string payload;
            put_u32(payload, kFormatVersion);
            put_u32(payload, kRecordSize);
            put_u64(payload, records_.size());
            payload += record_bytes(records_);
            const auto tmp = dir_ / (seg_name.string() + ".tmp");
            {
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                if (!out) throw DataError("score store: cannot write " + tmp.string());
                out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
            }
            std::filesystem::rename(tmp, dir_ / seg_name);
            manifest["segments"].push_back(
                json{{"file", seg_name.string()}, {"count", records_.size()}, {"checksum", checksum}});
        }
        for (const auto& p : stale) {
            if (p.filename() != seg_name) std::filesystem::remove(p);
        }

        const auto tmp_manifest = dir_ / "manifest.json.tmp";
        write_json_file(tmp_manifest, manifest);
        std::filesystem::rename(tmp_manifest, dir_ / "manifest.json");
    }

    std::filesystem::path dir_;
    std::string model_version_;
    std::vector<StoredRecord> records_;
    mutable std::unique_ptr<std::shared_mutex> mutex_ = std::make_unique<std::shared_mutex>();
};

}  // namespace kpalign
