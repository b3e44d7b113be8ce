#pragma once

#include <bit>
#include <cstddef>
#include <span>

namespace codemix {

/// In-place unnormalized fast Walsh-Hadamard transform (Sylvester ordering).
/// Applying it twice multiplies by the length.
inline void fwht(std::span<double> data) noexcept {
    const std::size_t n = data.size();
    double* d = data.data();
    std::size_t half = 1;
    if (n >= 4) {
        for (std::size_t i = 0; i < n; i += 4) {
            const double s0 = d[i] + d[i + 1];
            const double s1 = d[i] - d[i + 1];
            const double s2 = d[i + 2] + d[i + 3];
            const double s3 = d[i + 2] - d[i + 3];
            d[i] = s0 + s2;
            d[i + 1] = s1 + s3;
            d[i + 2] = s0 - s2;
            d[i + 3] = s1 - s3;
        }
        half = 4;
    }
    // two butterfly stages per sweep
    for (; 4 * half <= n; half <<= 2) {
        for (std::size_t block = 0; block < n; block += 4 * half) {
            double* p0 = d + block;
            double* p1 = p0 + half;
            double* p2 = p1 + half;
            double* p3 = p2 + half;
            for (std::size_t j = 0; j < half; ++j) {
                const double s0 = p0[j] + p1[j];
                const double s1 = p0[j] - p1[j];
                const double s2 = p2[j] + p3[j];
                const double s3 = p2[j] - p3[j];
                p0[j] = s0 + s2;
                p1[j] = s1 + s3;
                p2[j] = s0 - s2;
                p3[j] = s1 - s3;
            }
        }
    }
    for (; half < n; half <<= 1) {
        for (std::size_t block = 0; block < n; block += 2 * half) {
            double* lo = d + block;
            double* hi = lo + half;
            for (std::size_t j = 0; j < half; ++j) {
                const double a = lo[j];
                const double b = hi[j];
                lo[j] = a + b;
                hi[j] = a - b;
            }
        }
    }
}

/// Entry (row, col) of the unnormalized Sylvester Hadamard matrix.
[[nodiscard]] inline double hadamard_entry(std::size_t row, std::size_t col) noexcept {
    return (std::popcount(row & col) & 1) ? -1.0 : 1.0;
}

}  // namespace codemix
