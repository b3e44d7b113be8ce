#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "codemix/error.hpp"

namespace codemix {

/// Primitive polynomials for GF(2^v), 1 <= v <= 16, including the leading term.
/// The v = 16 entry is x^16 + x^5 + x^3 + x^2 + 1 (0x1002D).
inline constexpr std::array<std::uint32_t, 17> kPrimitivePolynomials = {
    0x0,    0x3,    0x7,    0xB,    0x13,   0x25,   0x43,   0x89,  0x11D,
    0x211,  0x409,  0x805,  0x1053, 0x201B, 0x4443, 0x8003, 0x1002D,
};

inline constexpr unsigned kMinFieldBits = 1;
inline constexpr unsigned kMaxFieldBits = 16;

/// Log/antilog tables for GF(2^v). Addition is XOR; multiplication goes through
/// the tables. Instances are immutable and shared via GaloisField::get().
class GaloisField {
public:
    explicit GaloisField(unsigned bits) : bits_(bits) {
        if (bits < kMinFieldBits || bits > kMaxFieldBits) {
            throw PreconditionViolation("GF(2^v) supports 1 <= v <= 16, got v = " + std::to_string(bits));
        }
        const std::uint32_t size = 1u << bits;
        const std::uint32_t poly = kPrimitivePolynomials[bits];
        exp_.resize(2 * size);
        log_.assign(size, 0);
        std::uint32_t x = 1;
        for (std::uint32_t i = 0; i + 1 < size; ++i) {
            exp_[i] = x;
            log_[x] = i;
            x <<= 1;
            if (x & size) {
                x ^= poly;
            }
        }
        // duplicate so mul can skip the modulo
        for (std::uint32_t i = size - 1; i < 2 * size; ++i) {
            exp_[i] = exp_[i - (size - 1)];
        }
    }

    static std::shared_ptr<const GaloisField> get(unsigned bits) {
        static std::mutex mutex;
        static std::array<std::shared_ptr<const GaloisField>, kMaxFieldBits + 1> cache;
        std::lock_guard lock(mutex);
        if (bits < kMinFieldBits || bits > kMaxFieldBits) {
            throw PreconditionViolation("GF(2^v) supports 1 <= v <= 16, got v = " + std::to_string(bits));
        }
        if (!cache[bits]) {
            cache[bits] = std::make_shared<const GaloisField>(bits);
        }
        return cache[bits];
    }

    [[nodiscard]] unsigned bits() const noexcept { return bits_; }
    [[nodiscard]] std::uint32_t size() const noexcept { return 1u << bits_; }
    [[nodiscard]] std::uint32_t order() const noexcept { return size() - 1; }

    [[nodiscard]] static std::uint32_t add(std::uint32_t a, std::uint32_t b) noexcept { return a ^ b; }

    [[nodiscard]] std::uint32_t mul(std::uint32_t a, std::uint32_t b) const noexcept {
        if (a == 0 || b == 0) {
            return 0;
        }
        return exp_[log_[a] + log_[b]];
    }

    [[nodiscard]] std::uint32_t inv(std::uint32_t a) const {
        if (a == 0) {
            throw PreconditionViolation("zero has no multiplicative inverse");
        }
        return exp_[order() - log_[a]];
    }

    [[nodiscard]] std::uint32_t div(std::uint32_t a, std::uint32_t b) const { return mul(a, inv(b)); }

    /// alpha^i for the primitive element alpha = x.
    [[nodiscard]] std::uint32_t power_of_generator(std::uint32_t i) const noexcept { return exp_[i % order()]; }

private:
    unsigned bits_;
    std::vector<std::uint32_t> exp_;
    std::vector<std::uint32_t> log_;
};

/// Carry-less reference multiply with reduction; independent of the tables.
inline std::uint32_t gf_mul_slow(std::uint32_t a, std::uint32_t b, unsigned bits) {
    const std::uint32_t poly = kPrimitivePolynomials.at(bits);
    std::uint32_t acc = 0;
    while (b != 0) {
        if (b & 1u) {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if (a & (1u << bits)) {
            a ^= poly;
        }
    }
    return acc;
}

}  // namespace codemix
