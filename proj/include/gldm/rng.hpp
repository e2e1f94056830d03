#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

namespace gldm {

/*!
 * Counter-based generator: Philox4x32 with 10 rounds.
 *
 * A draw is a pure function of (seed, stream, step, block), so any
 * trajectory/step pair can be reproduced independently of execution order.
 * See Salmon et al., "Parallel random numbers: as easy as 1, 2, 3" (SC'11).
 */
class Philox4x32 {
  public:
    using Block = std::array<std::uint32_t, 4>;

    explicit constexpr Philox4x32(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}
    {
    }

    constexpr Block operator()(Block counter) const
    {
        std::array<std::uint32_t, 2> key = key_;
        for (int round = 0; round < 10; ++round) {
            counter = single_round(counter, key);
            key[0] += kWeylA;
            key[1] += kWeylB;
        }
        return counter;
    }

  private:
    static constexpr std::uint32_t kWeylA = 0x9E3779B9u;
    static constexpr std::uint32_t kWeylB = 0xBB67AE85u;
    static constexpr std::uint32_t kMulA = 0xD2511F53u;
    static constexpr std::uint32_t kMulB = 0xCD9E8D57u;

    static constexpr Block single_round(const Block& c, const std::array<std::uint32_t, 2>& k)
    {
        std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * c[0];
        std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * c[2];
        auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        auto lo0 = static_cast<std::uint32_t>(p0);
        auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        auto lo1 = static_cast<std::uint32_t>(p1);
        return Block{hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    std::array<std::uint32_t, 2> key_;
};

/*!
 * Inverse of the standard normal CDF (Wichura, AS 241 "PPND16").
 * Relative accuracy about 1e-16 over (0, 1).
 */
inline double normal_quantile(double p)
{
    double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        double r = 0.180625 - q * q;
        return q *
               (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                    45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        value = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                     1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                  4.6303378461565452959) * r + 1.42343711074968357734) /
                (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                     0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                  2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                     0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                  5.4637849111641143699) * r + 6.6579046435011037772) /
                (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                     7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                  0.59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -value : value;
}

/// Uniform in the open interval (0, 1) from 52 random bits; the half-ulp
/// offset keeps both endpoints out.
inline double uniform_from_bits(std::uint32_t hi, std::uint32_t lo)
{
    std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

/*!
 * Standard normal variates for one (stream, step) cell.
 *
 * Lane k uses Philox block k/2; each block yields two 53-bit uniforms,
 * each mapped through the normal quantile (one uniform per variate).
 */
class GaussianStream {
  public:
    explicit constexpr GaussianStream(std::uint64_t seed) : engine_(seed) {}

    void fill(std::uint64_t stream, std::uint64_t step, std::span<double> out) const
    {
        const auto s_lo = static_cast<std::uint32_t>(stream);
        const auto s_hi = static_cast<std::uint32_t>(stream >> 32);
        const auto step_lo = static_cast<std::uint32_t>(step);
        const auto step_hi = static_cast<std::uint32_t>(step >> 32);
        for (std::size_t lane = 0; lane < out.size(); lane += 2) {
            // block index packed with the upper step bits
            auto block = static_cast<std::uint32_t>(lane / 2);
            Philox4x32::Block bits = engine_({s_lo, s_hi, step_lo, (step_hi << 16) ^ block});
            out[lane] = normal_quantile(uniform_from_bits(bits[0], bits[1]));
            if (lane + 1 < out.size()) {
                out[lane + 1] = normal_quantile(uniform_from_bits(bits[2], bits[3]));
            }
        }
    }

    double uniform(std::uint64_t stream, std::uint64_t step, std::uint32_t block = 0) const
    {
        Philox4x32::Block bits = engine_({static_cast<std::uint32_t>(stream),
                                          static_cast<std::uint32_t>(stream >> 32),
                                          static_cast<std::uint32_t>(step),
                                          (static_cast<std::uint32_t>(step >> 32) << 16) ^ block});
        return uniform_from_bits(bits[0], bits[1]);
    }

  private:
    Philox4x32 engine_;
};

}  // namespace gldm
