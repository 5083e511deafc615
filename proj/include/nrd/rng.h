#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "nrd/tensor.h"

namespace nrd {

// PCG32 (Melissa O'Neill's minimal 64/32 generator). Chosen because its
// reference sequence is published: seed(42, 54) must produce
// 0xa15c02b7 0x7b47f409 0xba1d3330 0x83d2f293 0xbfa4784b 0xcbed606e,
// which the test suite pins. One generator per purpose/thread; generators
// are cheap value types.
class Pcg32 {
public:
    Pcg32() { seed(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL); }
    Pcg32(std::uint64_t initstate, std::uint64_t initseq) { seed(initstate, initseq); }

    void seed(std::uint64_t initstate, std::uint64_t initseq) {
        state_ = 0u;
        inc_ = (initseq << 1u) | 1u;
        next_u32();
        state_ += initstate;
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    // Uniform in [0, 1), 32-bit resolution.
    double next_double() { return next_u32() * 0x1p-32; }

    // Uniform in (0, 1); safe as a log() argument.
    double next_double_open() { return (next_u32() + 0.5) * 0x1p-32; }

    // Uniform integer in [0, n).
    std::uint32_t next_below(std::uint32_t n) {
        // Debiased via rejection; n == 0 is a caller bug.
        check_contract(n > 0, "next_below(0)");
        std::uint32_t threshold = (-n) % n;
        for (;;) {
            std::uint32_t r = next_u32();
            if (r >= threshold) return r % n;
        }
    }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Named sub-stream of a run seed. Streams for different purposes ("init",
// "data", "augment", ...) are independent PCG32 sequences, so consumption in
// one never shifts another.
inline Pcg32 named_stream(std::uint64_t seed, std::string_view purpose) {
    return Pcg32(seed, fnv1a64(purpose));
}

template <typename T>
TensorT<T> rand_uniform(Pcg32& rng, Shape shape, double lo, double hi) {
    TensorT<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(lo + (hi - lo) * rng.next_double());
    return t;
}

// Box-Muller; consumes two draws per pair of values, deterministic order.
template <typename T>
TensorT<T> rand_normal(Pcg32& rng, Shape shape, double mean, double stddev) {
    TensorT<T> t(std::move(shape));
    std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; i += 2) {
        double u1 = rng.next_double_open();
        double u2 = rng.next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        t[i] = static_cast<T>(mean + stddev * (r * std::cos(a)));
        if (i + 1 < n) t[i + 1] = static_cast<T>(mean + stddev * (r * std::sin(a)));
    }
    return t;
}

} // namespace nrd
