#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace kano {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
///
/// A stream is identified by a 64-bit key and a 64-bit tag. The 128-bit
/// counter is (block_index, tag), so streams with distinct (key, tag) pairs
/// never share blocks. Forward SDE paths use key = seed ^ path_index and
/// tag 0; other consumers pick their own tag so they never alias path noise.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    static Block generate(Block counter, std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * counter[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * counter[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            counter = {hi1 ^ counter[1] ^ key[0], lo1, hi0 ^ counter[3] ^ key[1], lo0};
        }
        return counter;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Sequential reader over one Philox stream. Normals use Box-Muller so the
/// sequence is bit-identical across standard libraries.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t key, std::uint64_t tag = 0)
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)}, tag_(tag) {}

    std::uint32_t next_u32() {
        if (lane_ == 4) refill();
        return block_[lane_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

private:
    void refill() {
        const Philox4x32::Block counter{static_cast<std::uint32_t>(block_index_),
                                        static_cast<std::uint32_t>(block_index_ >> 32),
                                        static_cast<std::uint32_t>(tag_),
                                        static_cast<std::uint32_t>(tag_ >> 32)};
        block_ = Philox4x32::generate(counter, key_);
        ++block_index_;
        lane_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint64_t tag_;
    std::uint64_t block_index_ = 0;
    Philox4x32::Block block_{};
    int lane_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stream tags used across the library.
namespace stream_tag {
inline constexpr std::uint64_t kPath = 0;
inline constexpr std::uint64_t kDataset = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kStart = 4;
inline constexpr std::uint64_t kProbe = 5;
}  // namespace stream_tag

}  // namespace kano
