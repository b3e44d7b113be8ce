#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "codemix/error.hpp"

namespace codemix {

/// Real vector of length L * 2^v addressed by (section, index).
class SectionedVector {
public:
    SectionedVector() = default;
    SectionedVector(std::size_t sections, unsigned section_bits, double fill = 0.0)
        : sections_(sections), bits_(section_bits), data_(sections * (std::size_t{1} << section_bits), fill) {}

    [[nodiscard]] std::size_t sections() const noexcept { return sections_; }
    [[nodiscard]] unsigned section_bits() const noexcept { return bits_; }
    [[nodiscard]] std::size_t section_size() const noexcept { return std::size_t{1} << bits_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] double& at(std::size_t section, std::size_t index) { return data_[section * section_size() + index]; }
    [[nodiscard]] double at(std::size_t section, std::size_t index) const {
        return data_[section * section_size() + index];
    }

    [[nodiscard]] std::span<double> section(std::size_t s) { return {data_.data() + s * section_size(), section_size()}; }
    [[nodiscard]] std::span<const double> section(std::size_t s) const {
        return {data_.data() + s * section_size(), section_size()};
    }

    [[nodiscard]] std::span<double> flat() noexcept { return data_; }
    [[nodiscard]] std::span<const double> flat() const noexcept { return data_; }

    [[nodiscard]] bool same_shape(const SectionedVector& other) const noexcept {
        return sections_ == other.sections_ && bits_ == other.bits_;
    }

private:
    std::size_t sections_ = 0;
    unsigned bits_ = 0;
    std::vector<double> data_;
};

}  // namespace codemix
