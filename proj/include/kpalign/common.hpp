// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <cstdint>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kpalign {

// Raised for bad configuration (CLI flags, config files, invalid parameter
// combinations). The CLI maps this to its config-error exit code.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised for bad or inconsistent data (corrupt files, unknown ids, version
// mismatches, training divergence). Maps to the data-error exit code.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Hashing

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t seed = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), seed);
}

// Finalizer from splitmix64; good avalanche for combining ids into a key.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ULL)); }

// Uniform double in [0,1) derived from a hash value.
inline double hash_unit(uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

inline std::string hex16(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// Per-epoch mean loss emitted by both encoder trainers.
struct TrainTrace {
    std::vector<double> epoch_loss;
};

// ---------------------------------------------------------------------------
// (item_id, keyphrase_id) key used across scoring, evaluation, and the store.

struct PairKey {
    int64_t item_id = 0;
    int64_t keyphrase_id = 0;

    bool operator==(const PairKey&) const = default;
    auto operator<=>(const PairKey&) const = default;
};

struct PairKeyHash {
    size_t operator()(const PairKey& k) const {
        return static_cast<size_t>(mix64(static_cast<uint64_t>(k.item_id), static_cast<uint64_t>(k.keyphrase_id)));
    }
};

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// mt19937_64 has a standardized stream, but the std distributions do not, so
// every sampler here is hand-rolled to keep generated worlds stable across
// toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix(seed)), inc_(splitmix(seed + 0x9e3779b97f4a7c15ULL) | 1) {}

    uint64_t next_u64() {
        // xorshift128+ style step on two lanes; small, fast, reproducible.
        uint64_t x = state_;
        const uint64_t y = inc_;
        state_ = y;
        x ^= x << 23;
        inc_ = x ^ y ^ (x >> 17) ^ (y >> 26);
        return inc_ + y;
    }

    // [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0,n)
    uint64_t uniform_index(uint64_t n) { return n ? next_u64() % n : 0; }

    // [lo,hi] inclusive
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(uniform_index(static_cast<uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    int64_t binomial(int64_t n, double p) {
        if (p <= 0.0 || n <= 0) return 0;
        if (p >= 1.0) return n;
        int64_t k = 0;
        for (int64_t i = 0; i < n; ++i) k += bernoulli(p);
        return k;
    }

    // Marsaglia polar method with a cached spare.
    double normal(double mean = 0.0, double sd = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + sd * spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return mean + sd * u * m;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t splitmix(uint64_t x) { return mix64(x); }

    uint64_t state_;
    uint64_t inc_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace kpalign
