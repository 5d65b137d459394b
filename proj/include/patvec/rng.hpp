#pragma once

// Deterministic random source shared by every sampling site in the project.
//
// The engine is std::mt19937_64, whose raw output sequence is fixed by the
// C++ standard. Bounded integers, unit reals, shuffles and subset sampling
// are implemented here rather than with std::uniform_*_distribution because
// the standard leaves those implementation-defined; with these helpers the
// same seed produces the same artifacts on every platform.

#include <cstdint>
#include <locale>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "patvec/errors.hpp"

namespace patvec {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stable per-key stream seed (e.g. one independent stream per focal patent).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
    return splitmix64(seed ^ fnv1a64(key));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Unbiased integer in [0, n), rejection sampling.
    std::uint64_t uniform_u64(std::uint64_t n) {
        if (n == 0) throw NumericError("uniform_u64: empty range");
        const std::uint64_t limit = (UINT64_MAX / n) * n;
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return r % n;
    }

    // Inclusive integer range.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (lo > hi) throw NumericError("uniform_int: lo > hi");
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(uniform_u64(span));
    }

    // [0, 1) with 53 random bits.
    double uniform_real() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform_real(double lo, double hi) {
        return lo + (hi - lo) * uniform_real();
    }

    bool bernoulli(double p) { return uniform_real() < p; }

    // Fisher-Yates, back to front.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_u64(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // First k elements of a partial Fisher-Yates over a copy of the pool.
    template <class T>
    std::vector<T> sample_without_replacement(const std::vector<T>& pool, std::size_t k) {
        if (k > pool.size())
            throw NumericError("sample_without_replacement: k exceeds pool size");
        std::vector<T> work = pool;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_u64(work.size() - i));
            std::swap(work[i], work[j]);
        }
        work.resize(k);
        return work;
    }

    template <class T>
    const T& pick(const std::vector<T>& pool) {
        if (pool.empty()) throw NumericError("pick: empty pool");
        return pool[static_cast<std::size_t>(uniform_u64(pool.size()))];
    }

    // Engine state as the standard's portable text form.
    std::string save_state() const {
        std::ostringstream os;
        os.imbue(std::locale::classic());
        os << engine_;
        return os.str();
    }

    void restore_state(const std::string& s) {
        std::istringstream is(s);
        is.imbue(std::locale::classic());
        is >> engine_;
        if (is.fail()) throw DataError("rng: malformed engine state");
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace patvec
