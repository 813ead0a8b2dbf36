#pragma once

#include <cstdint>
#include <random>

namespace kbt {

namespace detail {

// splitmix64 finalizer; full-avalanche 64-bit mixing.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

// A reproducible random stream addressed by (seed, stream_id). The pair fully
// determines the generated sequence; distinct stream_ids give streams that can
// be consumed concurrently without coordination.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    // Child stream; sub(a).sub(b) and sub(b).sub(a) differ.
    RngStream sub(std::uint64_t k) const {
        return RngStream{seed, detail::mix64(stream_id ^ detail::mix64(k))};
    }

    // Collapse the stream address into a single 64-bit seed.
    std::uint64_t scalar() const {
        return detail::mix64(seed ^ detail::mix64(stream_id));
    }

    std::mt19937_64 engine() const {
        const std::uint64_t a = detail::mix64(seed);
        const std::uint64_t b = detail::mix64(stream_id ^ 0x6a09e667f3bcc909ULL);
        std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
        return std::mt19937_64(seq);
    }
};

}  // namespace kbt
