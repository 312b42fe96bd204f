#pragma once

#include <array>
#include <cstdint>

namespace bsdelab {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless: every output block
/// is a pure function of (counter, key), which is what makes per-path substreams reproducible.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter block(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kW0;
            key[1] += kW1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    static constexpr Counter single_round(const Counter& c, const Key& k) noexcept {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// Uniform in (0, 1) from two 32-bit words: 52 random bits, offset by half a step so 0 and 1
/// are never produced (with 53 bits the top value would round to 1).
constexpr double uniform_open01(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
    return static_cast<double>(bits) * 0x1.0p-52 + 0x1.0p-53;
}

/// Standard normal by inverse CDF.
double inverse_normal_cdf(double u);

/// The j-th standard normal draw of path `path` under `seed`. Pure function of its arguments.
double path_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t j);

}  // namespace bsdelab
