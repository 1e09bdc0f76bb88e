// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "kpalign/batch.hpp"
#include "kpalign/catalog.hpp"
#include "kpalign/score_store.hpp"
#include "kpalign/scorer.hpp"

namespace kpalign {

struct CatalogEvent {
    enum class Kind { kItemCreated, kItemRevised, kKeyphraseCreated };

    Kind kind = Kind::kItemCreated;
    int64_t id = 0;
    int64_t event_time_ms = 0;  // UTC milliseconds
};

inline const char* to_string(CatalogEvent::Kind k) {
    switch (k) {
        case CatalogEvent::Kind::kItemCreated: return "item_created";
        case CatalogEvent::Kind::kItemRevised: return "item_revised";
        case CatalogEvent::Kind::kKeyphraseCreated: return "keyphrase_created";
    }
    return "?";
}

inline CatalogEvent::Kind event_kind_from_string(const std::string& s) {
    if (s == "item_created") return CatalogEvent::Kind::kItemCreated;
    if (s == "item_revised") return CatalogEvent::Kind::kItemRevised;
    if (s == "keyphrase_created") return CatalogEvent::Kind::kKeyphraseCreated;
    throw ConfigError("unknown event kind: " + s);
}

// Throws ConfigError on malformed payloads; those are rejected at ingestion.
inline CatalogEvent parse_event(const json& j) {
    if (!j.is_object()) throw ConfigError("event must be a JSON object");
    if (!j.contains("kind") || !j.at("kind").is_string()) throw ConfigError("event missing string field 'kind'");
    if (!j.contains("id") || !j.at("id").is_number_integer()) throw ConfigError("event missing integer field 'id'");
    CatalogEvent ev;
    ev.kind = event_kind_from_string(j.at("kind").get<std::string>());
    ev.id = j.at("id").get<int64_t>();
    if (j.contains("event_time_ms")) {
        if (!j.at("event_time_ms").is_number_integer()) throw ConfigError("event_time_ms must be an integer");
        ev.event_time_ms = j.at("event_time_ms").get<int64_t>();
        if (ev.event_time_ms < 0) throw ConfigError("event_time_ms must be >= 0");
    }
    return ev;
}

struct DeadLetter {
    CatalogEvent event;
    std::string reason;
};

struct WindowResult {
    uint64_t window_id = 0;
    size_t events_in = 0;
    size_t events_after_dedup = 0;
    size_t pairs_scored = 0;
    size_t dead_lettered = 0;
    double latency_ms = 0.0;
};

// Tumbling-window micro-batcher: buffer, dedup by (kind, id) keeping the
// latest event, enrich from the catalog, score, apply to the store as one
// atomic merge per window.
class NrtPipeline {
public:
    NrtPipeline(Catalog& catalog, const RelevanceScorer& scorer, const PairSource& pair_source,
                ScoreStore& store, int64_t window_ms = 500)
        : catalog_(catalog), scorer_(scorer), pair_source_(pair_source), store_(store), window_ms_(window_ms) {
        if (window_ms_ < 1) throw ConfigError("nrt: window_ms must be >= 1");
    }

    ~NrtPipeline() { stop(); }

    int64_t window_ms() const { return window_ms_; }

    void ingest(const CatalogEvent& ev) {
        std::lock_guard lock(buffer_mutex_);
        buffer_.push_back(ev);
    }

    // Closes the current window: dedup, enrich, score, apply. Safe to call
    // from the timer thread or directly (deterministic tests drive it).
    WindowResult flush_window() {
        std::vector<CatalogEvent> events;
        {
            std::lock_guard lock(buffer_mutex_);
            events.swap(buffer_);
        }
        const auto t0 = std::chrono::steady_clock::now();
        WindowResult result;
        result.window_id = next_window_id_.fetch_add(1);
        result.events_in = events.size();

        // dedup by (kind, id): later event_time wins, arrival order breaks ties
        std::map<std::pair<int, int64_t>, CatalogEvent> latest;
        for (const auto& ev : events) {
            auto key = std::make_pair(static_cast<int>(ev.kind), ev.id);
            auto it = latest.find(key);
            if (it == latest.end() || ev.event_time_ms >= it->second.event_time_ms) latest[key] = ev;
        }
        result.events_after_dedup = latest.size();

        std::vector<PairKey> touched;
        std::vector<ScoreRecord> records;
        {
            std::lock_guard lock(flush_mutex_);
            for (auto& [key, ev] : latest) {
                if (ev.kind == CatalogEvent::Kind::kKeyphraseCreated) {
                    auto* kp = catalog_.find_keyphrase(ev.id);
                    if (!kp) {
                        dead_letter(ev, "enrichment miss: unknown keyphrase id");
                        ++result.dead_lettered;
                        continue;
                    }
                    kp->updated_at_ms = std::max(kp->updated_at_ms, ev.event_time_ms);
                    auto pairs = pair_source_.pairs_for_keyphrase(ev.id);
                    touched.insert(touched.end(), pairs.begin(), pairs.end());
                } else {
                    auto* item = catalog_.find_item(ev.id);
                    if (!item) {
                        dead_letter(ev, "enrichment miss: unknown item id");
                        ++result.dead_lettered;
                        continue;
                    }
                    item->updated_at_ms = std::max(item->updated_at_ms, ev.event_time_ms);
                    auto pairs = pair_source_.pairs_for_item(ev.id);
                    touched.insert(touched.end(), pairs.begin(), pairs.end());
                }
            }
            std::sort(touched.begin(), touched.end());
            touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
            if (!touched.empty()) {
                records = scorer_.score_pairs(catalog_, touched, &counters_);
                store_.merge(records);
            }
        }
        result.pairs_scored = touched.size();
        result.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        {
            std::lock_guard lock(results_mutex_);
            window_results_.push_back(result);
        }
        return result;
    }

    void start() {
        bool expected = false;
        if (!running_.compare_exchange_strong(expected, true)) return;
        timer_ = std::thread([this] {
            std::unique_lock lock(timer_mutex_);
            while (running_) {
                timer_cv_.wait_for(lock, std::chrono::milliseconds(window_ms_), [this] { return !running_.load(); });
                if (!running_) break;
                lock.unlock();
                flush_window();
                lock.lock();
            }
        });
    }

    void stop() {
        bool expected = true;
        if (!running_.compare_exchange_strong(expected, false)) return;
        timer_cv_.notify_all();
        if (timer_.joinable()) timer_.join();
        flush_window();  // drain whatever is buffered
    }

    std::vector<DeadLetter> dead_letters() const {
        std::lock_guard lock(results_mutex_);
        return dead_letters_;
    }

    std::vector<WindowResult> window_results() const {
        std::lock_guard lock(results_mutex_);
        return window_results_;
    }

    const ScoringCounters& counters() const { return counters_; }

private:
    void dead_letter(const CatalogEvent& ev, const std::string& reason) {
        std::lock_guard lock(results_mutex_);
        dead_letters_.push_back({ev, reason});
    }

    Catalog& catalog_;
    const RelevanceScorer& scorer_;
    const PairSource& pair_source_;
    ScoreStore& store_;
    int64_t window_ms_;

    std::mutex buffer_mutex_;
    std::vector<CatalogEvent> buffer_;
    std::mutex flush_mutex_;
    mutable std::mutex results_mutex_;
    std::vector<DeadLetter> dead_letters_;
    std::vector<WindowResult> window_results_;
    ScoringCounters counters_;
    std::atomic<uint64_t> next_window_id_{0};
    std::atomic<bool> running_{false};
    std::condition_variable timer_cv_;
    std::mutex timer_mutex_;
    std::thread timer_;
};

// HTTP front: POST /events, GET /scores, GET /healthz.
class NrtService {
public:
    NrtService(NrtPipeline& pipeline, ScoreStore& store) : pipeline_(pipeline), store_(store) {
        server_.Post("/events", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                const auto ev = parse_event(json::parse(req.body));
                pipeline_.ingest(ev);
                res.status = 202;
                res.set_content(json{{"accepted", true}}.dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(json{{"accepted", false}, {"error", e.what()}}.dump(), "application/json");
            }
        });
        server_.Get("/scores", [this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("item_id") || !req.has_param("keyphrase_id")) {
                res.status = 400;
                res.set_content(json{{"error", "item_id and keyphrase_id are required"}}.dump(),
                                "application/json");
                return;
            }
            int64_t item_id = 0, kp_id = 0;
            try {
                item_id = std::stoll(req.get_param_value("item_id"));
                kp_id = std::stoll(req.get_param_value("keyphrase_id"));
            } catch (const std::exception&) {
                res.status = 400;
                res.set_content(json{{"error", "ids must be integers"}}.dump(), "application/json");
                return;
            }
            const auto rec = store_.lookup({item_id, kp_id});
            if (!rec) {
                res.status = 404;
                res.set_content(json{{"error", "no score for pair"}}.dump(), "application/json");
                return;
            }
            res.set_content(json{{"item_id", rec->item_id},
                                 {"keyphrase_id", rec->keyphrase_id},
                                 {"score", rec->score},
                                 {"pass", rec->pass},
                                 {"model_version", rec->model_version},
                                 {"updated_at", rec->updated_at}}
                                .dump(),
                            "application/json");
        });
        server_.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(json{{"status", "ok"},
                                 {"windows_applied", pipeline_.window_results().size()},
                                 {"store_records", store_.size()},
                                 {"model_version", store_.model_version()}}
                                .dump(),
                            "application/json");
        });
    }

    // Binds to the requested port (0 = ephemeral) and serves on a background
    // thread until stop().
    int start(const std::string& host, int port) {
        int bound = port;
        if (port == 0) {
            bound = server_.bind_to_any_port(host);
            if (bound < 0) throw DataError("nrt service: failed to bind");
        } else if (!server_.bind_to_port(host, port)) {
            throw DataError("nrt service: failed to bind port " + std::to_string(port));
        }
        pipeline_.start();
        server_thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return bound;
    }

    void stop() {
        server_.stop();
        if (server_thread_.joinable()) server_thread_.join();
        pipeline_.stop();
    }

    ~NrtService() { stop(); }

private:
    NrtPipeline& pipeline_;
    ScoreStore& store_;
    httplib::Server server_;
    std::thread server_thread_;
};

}  // namespace kpalign
