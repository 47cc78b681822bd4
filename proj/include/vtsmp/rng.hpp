#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace vtsmp {

/// Philox4x32-10 (Salmon et al., SC'11). Stateless: the same (counter, key)
/// always yields the same block.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u;
    constexpr std::uint32_t M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u;
    constexpr std::uint32_t W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

/// Standard normals for noise channel block `block` of (path, step), four at a
/// time. Only the first `needed` entries are filled; the rest are zero.
inline std::array<double, 4> philox_normals(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                                            std::uint32_t block, int needed = 4) {
    const auto r = philox4x32({static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), step, block},
                              {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    constexpr double scale = 1.0 / 4294967296.0;
    std::array<double, 4> out{};
    for (int k = 0; 2 * k < needed && k < 2; ++k) {
        // open interval (0, 1) so the log is finite
        const double u1 = (static_cast<double>(r[2 * k]) + 0.5) * scale;
        const double u2 = (static_cast<double>(r[2 * k + 1]) + 0.5) * scale;
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        out[2 * k] = rad * std::cos(ang);
        out[2 * k + 1] = rad * std::sin(ang);
    }
    return out;
}

/// Brownian increments dW_1..dW_d for one (path, step), scaled by sqrt(dt).
inline void brownian_increment(std::uint64_t seed, std::uint64_t path, int step, int d, double sqrt_dt,
                               double* out) {
    for (int j0 = 0; j0 < d; j0 += 4) {
        const auto z = philox_normals(seed, path, static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(j0 / 4),
                                      d - j0);
        for (int j = j0; j < d && j < j0 + 4; ++j) out[j] = sqrt_dt * z[static_cast<std::size_t>(j - j0)];
    }
}

}  // namespace vtsmp
