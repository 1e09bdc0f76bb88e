// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kpalign/common.hpp"

namespace kpalign {

// One side of every scored pair. `updated_at_ms` is serving metadata: the
// last catalog create/revise time, 0 for entities never touched by an event.
struct ItemDoc {
    int64_t item_id = 0;
    std::string title;
    int64_t category_id = 0;
    std::string category_name;
    int64_t updated_at_ms = 0;
};

struct Keyphrase {
    int64_t keyphrase_id = 0;
    std::string text;
    int64_t updated_at_ms = 0;
};

// ---------------------------------------------------------------------------
// Tokenizer: lowercase, split on whitespace/punctuation, drop empties.
//
// ASCII is lowercased; separators are ASCII whitespace/punctuation plus the
// common Unicode space/punctuation blocks (NBSP, general punctuation, CJK
// symbols). Other non-ASCII codepoints pass through as word characters.

namespace detail {

inline bool is_ascii_word(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

inline bool is_separator_codepoint(uint32_t cp) {
    if (cp == 0x00A0 || cp == 0x1680 || cp == 0x202F || cp == 0x205F || cp == 0x3000) return true;
    if (cp >= 0x2000 && cp <= 0x206F) return true;  // spaces + general punctuation
    if (cp >= 0x3001 && cp <= 0x303F) return true;  // CJK symbols and punctuation
    if (cp >= 0x00A1 && cp <= 0x00BF) return true;  // latin-1 punctuation block
    return false;
}

// Decodes one UTF-8 codepoint at s[i]; advances i. Malformed bytes are
// consumed one at a time and returned verbatim so tokenization never fails.
inline uint32_t next_codepoint(std::string_view s, size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    size_t len = 1;
    uint32_t cp = b0;
    if ((b0 & 0xE0) == 0xC0) { len = 2; cp = b0 & 0x1F; }
    else if ((b0 & 0xF0) == 0xE0) { len = 3; cp = b0 & 0x0F; }
    else if ((b0 & 0xF8) == 0xF0) { len = 4; cp = b0 & 0x07; }
    if (len > 1) {
        if (i + len > s.size()) { ++i; return b0; }
        for (size_t k = 1; k < len; ++k) {
            const auto bk = static_cast<unsigned char>(s[i + k]);
            if ((bk & 0xC0) != 0x80) { ++i; return b0; }
            cp = (cp << 6) | (bk & 0x3F);
        }
    }
    i += len;
    return cp;
}

}  // namespace detail

inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (c < 0x80) {
            ++i;
            if (c >= 'A' && c <= 'Z') {
                cur.push_back(static_cast<char>(c - 'A' + 'a'));
            } else if (detail::is_ascii_word(c)) {
                cur.push_back(static_cast<char>(c));
            } else {
                if (!cur.empty()) { tokens.push_back(std::move(cur)); cur.clear(); }
            }
        } else {
            const size_t start = i;
            const uint32_t cp = detail::next_codepoint(text, i);
            if (detail::is_separator_codepoint(cp)) {
                if (!cur.empty()) { tokens.push_back(std::move(cur)); cur.clear(); }
            } else {
                cur.append(text.substr(start, i - start));
            }
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

inline std::vector<std::string> tokenize_lower(std::string_view text) {
    // tokenize() already lowercases ASCII; kept as the explicit entry point
    // used by callers that care about the contract name.
    return tokenize(text);
}

// ---------------------------------------------------------------------------
// Vocabulary. Special tokens occupy fixed ids 0..3; real tokens follow in
// (frequency desc, lexicographic) order so builds are deterministic.

class Vocab {
public:
    static constexpr int kPadId = 0;
    static constexpr int kUnkId = 1;
    static constexpr int kClsId = 2;
    static constexpr int kSepId = 3;

    Vocab() {
        static const char* specials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
        for (const char* s : specials) {
            token_to_id_.emplace(s, static_cast<int>(id_to_token_.size()));
            id_to_token_.emplace_back(s);
        }
    }

    int add(const std::string& token) {
        auto [it, inserted] = token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
        if (inserted) id_to_token_.push_back(token);
        return it->second;
    }

    int id(std::string_view token) const {
        auto it = token_to_id_.find(std::string(token));
        return it == token_to_id_.end() ? kUnkId : it->second;
    }

    bool contains(std::string_view token) const { return token_to_id_.count(std::string(token)) > 0; }

    const std::string& token(int id) const { return id_to_token_.at(static_cast<size_t>(id)); }

    int size() const { return static_cast<int>(id_to_token_.size()); }

    const std::vector<std::string>& tokens() const { return id_to_token_; }

    // Stable content hash; checkpoints store it so stale vocab files are caught.
    uint64_t hash() const {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& t : id_to_token_) {
            h = fnv1a64(t.data(), t.size(), h);
            h = fnv1a64("\x1f", 1, h);
        }
        return h;
    }

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

inline Vocab build_vocab(const std::vector<std::string>& corpus, size_t min_freq) {
    if (min_freq < 1) throw ConfigError("build_vocab: min_freq must be >= 1");
    std::unordered_map<std::string, size_t> freq;
    for (const auto& text : corpus) {
        for (auto& tok : tokenize(text)) ++freq[tok];
    }
    std::vector<std::pair<std::string, size_t>> kept;
    kept.reserve(freq.size());
    for (auto& [tok, n] : freq) {
        if (n >= min_freq) kept.emplace_back(tok, n);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    for (auto& [tok, n] : kept) v.add(tok);
    return v;
}

// ---------------------------------------------------------------------------
// Token id sequences.

struct TokenSeq {
    std::vector<int> ids;

    size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }
    int operator[](size_t i) const { return ids[i]; }
};

namespace detail {

inline void append_tokens(std::vector<int>& out, const std::vector<std::string>& toks, const Vocab& vocab) {
    for (const auto& t : toks) out.push_back(vocab.id(t));
}

inline void truncate(std::vector<int>& ids, size_t max_len) {
    if (ids.size() > max_len) ids.resize(max_len);
}

}  // namespace detail

// Bi-encoder item input: title tokens, [SEP], category tokens.
inline TokenSeq encode_bi_item(const ItemDoc& item, const Vocab& vocab, size_t max_len) {
    TokenSeq seq;
    detail::append_tokens(seq.ids, tokenize(item.title), vocab);
    seq.ids.push_back(Vocab::kSepId);
    detail::append_tokens(seq.ids, tokenize(item.category_name), vocab);
    detail::truncate(seq.ids, max_len);
    return seq;
}

// Bi-encoder keyphrase input: the keyphrase tokens alone.
inline TokenSeq encode_bi_keyphrase(const Keyphrase& kp, const Vocab& vocab, size_t max_len) {
    TokenSeq seq;
    detail::append_tokens(seq.ids, tokenize(kp.text), vocab);
    detail::truncate(seq.ids, max_len);
    return seq;
}

// Cross-encoder input: [CLS] keyphrase [SEP] category [SEP] title.
inline TokenSeq encode_cross_pair(const Keyphrase& kp, const ItemDoc& item, const Vocab& vocab, size_t max_len) {
    TokenSeq seq;
    seq.ids.push_back(Vocab::kClsId);
    detail::append_tokens(seq.ids, tokenize(kp.text), vocab);
    seq.ids.push_back(Vocab::kSepId);
    detail::append_tokens(seq.ids, tokenize(item.category_name), vocab);
    seq.ids.push_back(Vocab::kSepId);
    detail::append_tokens(seq.ids, tokenize(item.title), vocab);
    detail::truncate(seq.ids, max_len);
    return seq;
}

}  // namespace kpalign
