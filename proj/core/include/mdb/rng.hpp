#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace mdb {

/// SplitMix64 finalizer. Bijective 64-bit mixing function.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Hierarchical stream key: folds each component into the seed with mix64.
/// stream_key(seed, {a, b}) != stream_key(seed, {b, a}).
constexpr std::uint64_t stream_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> parts) noexcept {
    std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
    for (std::uint64_t p : parts) {
        h = mix64(h + 0x9e3779b97f4a7c15ULL + mix64(p));
    }
    return h;
}

/// Domain tags for stream derivation. Values are part of the on-disk
/// determinism contract; never renumber.
enum class StreamTag : std::uint64_t {
    Render = 1,
    Split = 2,
    Ood = 3,
    Upsample = 4,
    Percentage = 5,
    Resample = 6,
    Init = 7,
    Shuffle = 8,
    Augment = 9,
    Uid = 10,
};

constexpr std::uint64_t tag(StreamTag t) noexcept { return static_cast<std::uint64_t>(t); }

/// SplitMix64 generator (Steele, Lea, Flood 2014). Fully specified, so
/// streams are bit-identical on every platform.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix64(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    constexpr double uniform() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [0, 1] inclusive of both ends.
    constexpr double uniform_closed() noexcept {
        return static_cast<double>(next() >> 11) * (1.0 / 9007199254740991.0);
    }

    /// Unbiased integer in [0, bound). bound must be > 0.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Integer in [lo, hi] inclusive.
    constexpr std::int64_t range(std::int64_t lo, std::int64_t hi) noexcept {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    /// Approximately standard normal (Irwin-Hall, 12 uniforms). Uses only
    /// IEEE basic arithmetic, so results do not depend on the platform libm.
    constexpr double normal_approx() noexcept {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += uniform();
        return s - 6.0;
    }

    constexpr std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

/// In-place Fisher-Yates shuffle driven by SplitMix64.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

/// First k elements of a seeded random permutation of [0, n).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                    SplitMix64& rng);

}  // namespace mdb
