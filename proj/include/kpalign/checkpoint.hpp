// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpalign/bi_encoder.hpp"
#include "kpalign/catalog.hpp"
#include "kpalign/cross_encoder.hpp"
#include "kpalign/text.hpp"

namespace kpalign {

inline std::string param_fingerprint(const std::vector<double>& params) {
    const uint64_t h = fnv1a64(params.data(), params.size() * sizeof(double));
    return hex16(h).substr(8);
}

inline std::string model_version_of(const BiEncoderModel& m) {
    return std::string("bi-") + to_string(m.objective()) + "#" + param_fingerprint(m.params());
}

inline std::string model_version_of(const CrossEncoderModel& m) {
    return "cross-" + m.config().preset + "#" + param_fingerprint(m.params());
}

inline void save_vocab(const std::filesystem::path& path, const Vocab& vocab) {
    write_json_file(path, json{{"tokens", vocab.tokens()}});
}

inline Vocab load_vocab(const std::filesystem::path& path) {
    const json j = read_json_file(path);
    const auto tokens = j.at("tokens").get<std::vector<std::string>>();
    if (tokens.size() < 4 || tokens[0] != "[PAD]" || tokens[1] != "[UNK]" || tokens[2] != "[CLS]" ||
        tokens[3] != "[SEP]")
        throw DataError("vocab file missing the fixed special tokens: " + path.string());
    Vocab v;
    for (size_t i = 4; i < tokens.size(); ++i) v.add(tokens[i]);
    return v;
}

// Both encoder families share one checkpoint container, distinguished by a
// family tag. Parameters are stored as JSON doubles (round-trip exact).
inline void save_bi_checkpoint(const std::filesystem::path& path, const BiEncoderModel& m) {
    json j;
    j["format"] = 1;
    j["family"] = "bi";
    j["objective"] = to_string(m.objective());
    j["dim"] = m.dim();
    j["vocab_size"] = m.vocab_size();
    j["seed"] = m.seed();
    j["vocab_hash"] = hex16(m.vocab_hash());
    j["threshold"] = m.threshold();
    j["model_version"] = model_version_of(m);
    j["params"] = m.params();
    write_json_file(path, j);
}

inline void save_cross_checkpoint(const std::filesystem::path& path, const CrossEncoderModel& m) {
    const auto& cfg = m.config();
    json j;
    j["format"] = 1;
    j["family"] = "cross";
    j["preset"] = cfg.preset;
    j["layers"] = cfg.layers;
    j["hidden"] = cfg.hidden;
    j["heads"] = cfg.heads;
    j["ffn_dim"] = cfg.ffn_dim;
    j["max_seq_len"] = cfg.max_seq_len;
    j["vocab_size"] = cfg.vocab_size;
    j["seed"] = cfg.seed;
    j["vocab_hash"] = hex16(m.vocab_hash());
    j["threshold"] = m.threshold();
    j["model_version"] = model_version_of(m);
    j["params"] = m.params();
    write_json_file(path, j);
}

inline std::string checkpoint_family(const std::filesystem::path& path) {
    return read_json_file(path).at("family").get<std::string>();
}

namespace detail {

inline uint64_t parse_hex16(const std::string& s) {
    if (s.size() != 16) throw DataError("bad hex checksum: " + s);
    return std::stoull(s, nullptr, 16);
}

inline void check_vocab(const json& j, const Vocab& vocab, const std::filesystem::path& path) {
    if (parse_hex16(j.at("vocab_hash").get<std::string>()) != vocab.hash())
        throw DataError("checkpoint vocab hash mismatch: " + path.string());
}

}  // namespace detail

inline BiEncoderModel load_bi_checkpoint(const std::filesystem::path& path, const Vocab& vocab) {
    const json j = read_json_file(path);
    if (j.at("family") != "bi") throw DataError("not a bi-encoder checkpoint: " + path.string());
    detail::check_vocab(j, vocab, path);
    auto m = BiEncoderModel::init(j.at("vocab_size").get<int>(), j.at("dim").get<int>(),
                                  bi_objective_from_string(j.at("objective").get<std::string>()),
                                  j.at("seed").get<uint64_t>(), vocab.hash());
    auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != m.param_count()) throw DataError("checkpoint parameter count mismatch: " + path.string());
    m.params() = std::move(params);
    m.set_threshold(j.at("threshold").get<double>());
    return m;
}

inline CrossEncoderModel load_cross_checkpoint(const std::filesystem::path& path, const Vocab& vocab) {
    const json j = read_json_file(path);
    if (j.at("family") != "cross") throw DataError("not a cross-encoder checkpoint: " + path.string());
    detail::check_vocab(j, vocab, path);
    CrossEncoderConfig cfg;
    cfg.layers = j.at("layers").get<int>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.ffn_dim = j.at("ffn_dim").get<int>();
    cfg.max_seq_len = j.at("max_seq_len").get<int>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.preset = j.at("preset").get<std::string>();
    auto m = CrossEncoderModel::init(cfg);
    auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != m.param_count()) throw DataError("checkpoint parameter count mismatch: " + path.string());
    m.params() = std::move(params);
    m.set_vocab_hash(vocab.hash());
    m.set_threshold(j.at("threshold").get<double>());
    return m;
}

}  // namespace kpalign
