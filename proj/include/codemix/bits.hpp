#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "codemix/error.hpp"

namespace codemix {

/// A message as a sequence of 0/1 values, most significant bit first.
using Bits = std::vector<std::uint8_t>;

/// Reads `count` bits starting at `offset` as an unsigned integer (MSB first).
[[nodiscard]] inline std::uint64_t bits_to_uint(const Bits& bits, std::size_t offset, std::size_t count) {
    if (offset + count > bits.size() || count > 64) {
        throw LengthMismatch("bit range out of bounds");
    }
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < count; ++i) {
        value = (value << 1) | (bits[offset + i] & 1u);
    }
    return value;
}

inline void uint_to_bits(std::uint64_t value, std::size_t count, Bits& out) {
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(static_cast<std::uint8_t>((value >> (count - 1 - i)) & 1u));
    }
}

[[nodiscard]] inline Bits random_bits(std::size_t count, std::mt19937_64& rng) {
    Bits bits(count);
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (i % 64 == 0) {
            word = rng();
        }
        bits[i] = static_cast<std::uint8_t>(word & 1u);
        word >>= 1;
    }
    return bits;
}

[[nodiscard]] inline std::string bits_to_string(const Bits& bits) {
    std::string s;
    s.reserve(bits.size());
    for (auto b : bits) {
        s.push_back(b ? '1' : '0');
    }
    return s;
}

[[nodiscard]] inline Bits bits_from_string(const std::string& s) {
    Bits bits;
    bits.reserve(s.size());
    for (char c : s) {
        if (c != '0' && c != '1') {
            throw ConfigError("bit strings may only contain 0 and 1");
        }
        bits.push_back(c == '1' ? 1 : 0);
    }
    return bits;
}

}  // namespace codemix
