#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace c3det {

/// Seeded random stream. Two sources built from the same (seed, stream_id)
/// yield the same draws on every platform: the engine is mt19937_64, whose
/// output is fixed by the standard, and all distributions below are
/// implemented here instead of relying on the library's unspecified ones.
class RandomSource {
public:
    RandomSource(std::uint64_t seed, std::string_view stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    const std::string& stream_id() const noexcept { return stream_id_; }

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Uniform real in [0, 1) with 53 bits of precision.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal(double mean = 0.0, double stddev = 1.0);

    /// Derive an independent child stream.
    RandomSource fork(std::string_view child) const;

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::string stream_id_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view s) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace c3det
