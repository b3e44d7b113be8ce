#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codemix/error.hpp"
#include "codemix/rng.hpp"
#include "codemix/sectioned_vector.hpp"
#include "codemix/wht.hpp"

namespace codemix {

enum class SensingKind { gaussian, hadamard };

inline std::string to_string(SensingKind kind) { return kind == SensingKind::gaussian ? "gaussian" : "hadamard"; }

inline SensingKind sensing_kind_from_string(const std::string& s) {
    if (s == "gaussian") {
        return SensingKind::gaussian;
    }
    if (s == "hadamard") {
        return SensingKind::hadamard;
    }
    throw ConfigError("unknown sensing kind '" + s + "'");
}

/// Everything needed to regenerate an operator bit-exactly.
struct OperatorSpec {
    SensingKind kind = SensingKind::hadamard;
    std::size_t rows = 0;       // n
    unsigned section_bits = 0;  // v
    std::size_t sections = 0;   // L
    std::uint64_t seed = 0;

    friend bool operator==(const OperatorSpec&, const OperatorSpec&) = default;
};

inline nlohmann::json to_json(const OperatorSpec& spec) {
    return {{"kind", to_string(spec.kind)}, {"n", spec.rows}, {"v", spec.section_bits}, {"L", spec.sections},
            {"seed", spec.seed}};
}

inline OperatorSpec operator_spec_from_json(const nlohmann::json& j) {
    try {
        return {sensing_kind_from_string(j.at("kind").get<std::string>()), j.at("n").get<std::size_t>(),
                j.at("v").get<unsigned>(), j.at("L").get<std::size_t>(), j.at("seed").get<std::uint64_t>()};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed operator JSON: ") + e.what());
    }
}

/// Linear map A: R^{L 2^v} -> R^n with unit-norm columns, plus its exact adjoint.
class SensingOperator {
public:
    explicit SensingOperator(OperatorSpec spec) : spec_(spec) {
        if (spec.rows == 0 || spec.sections == 0) {
            throw PreconditionViolation("operator needs n > 0 and L > 0");
        }
    }
    virtual ~SensingOperator() = default;
    SensingOperator(const SensingOperator&) = delete;
    SensingOperator& operator=(const SensingOperator&) = delete;

    [[nodiscard]] const OperatorSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] std::size_t rows() const noexcept { return spec_.rows; }
    [[nodiscard]] std::size_t sections() const noexcept { return spec_.sections; }
    [[nodiscard]] unsigned section_bits() const noexcept { return spec_.section_bits; }
    [[nodiscard]] std::size_t section_size() const noexcept { return std::size_t{1} << spec_.section_bits; }
    [[nodiscard]] std::size_t cols() const noexcept { return spec_.sections * section_size(); }

    /// out += scale * A m
    virtual void forward_accumulate(const SectionedVector& m, double scale, std::span<double> out) const = 0;
    /// out = A^T z
    virtual void adjoint_into(std::span<const double> z, SectionedVector& out) const = 0;
    /// out += scale * (column `index` of section `section`)
    virtual void add_column(std::size_t section, std::size_t index, double scale, std::span<double> out) const = 0;

    [[nodiscard]] std::vector<double> forward(const SectionedVector& m) const {
        std::vector<double> out(rows(), 0.0);
        forward_accumulate(m, 1.0, out);
        return out;
    }

    [[nodiscard]] SectionedVector adjoint(std::span<const double> z) const {
        SectionedVector out(sections(), section_bits());
        adjoint_into(z, out);
        return out;
    }

    /// Dense n x (L 2^v) row-major copy; test/oracle use only.
    [[nodiscard]] std::vector<double> materialize() const {
        std::vector<double> dense(rows() * cols(), 0.0);
        std::vector<double> col(rows());
        for (std::size_t s = 0; s < sections(); ++s) {
            for (std::size_t k = 0; k < section_size(); ++k) {
                std::fill(col.begin(), col.end(), 0.0);
                add_column(s, k, 1.0, col);
                const std::size_t c = s * section_size() + k;
                for (std::size_t i = 0; i < rows(); ++i) {
                    dense[i * cols() + c] = col[i];
                }
            }
        }
        return dense;
    }

protected:
    void check_input(const SectionedVector& m) const {
        if (m.sections() != sections() || m.section_bits() != section_bits()) {
            throw DimensionMismatch("sectioned vector shape does not match the operator");
        }
    }
    void check_channel(std::span<const double> z) const {
        if (z.size() != rows()) {
            throw DimensionMismatch("channel vector length " + std::to_string(z.size()) + " != n = " +
                                    std::to_string(rows()));
        }
    }

    OperatorSpec spec_;
};

/// Dense i.i.d. N(0, 1/n) operator. Memory is n * L * 2^v doubles, so small sizes only.
class GaussianOperator final : public SensingOperator {
public:
    static constexpr std::size_t kMaxEntries = std::size_t{1} << 27;

    explicit GaussianOperator(OperatorSpec spec) : SensingOperator(spec) {
        if (rows() * cols() > kMaxEntries) {
            throw PreconditionViolation("gaussian operator too large to store; use the hadamard kind");
        }
        std::mt19937_64 rng(derive_seed(spec.seed, 0x6761757373ULL));
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(rows())));
        // column-major so each column is contiguous
        entries_.resize(rows() * cols());
        for (auto& x : entries_) {
            x = normal(rng);
        }
    }

    void forward_accumulate(const SectionedVector& m, double scale, std::span<double> out) const override {
        check_input(m);
        check_channel(out);
        const auto flat = m.flat();
        for (std::size_t c = 0; c < cols(); ++c) {
            const double w = scale * flat[c];
            if (w == 0.0) {
                continue;
            }
            const double* col = entries_.data() + c * rows();
            for (std::size_t i = 0; i < rows(); ++i) {
                out[i] += w * col[i];
            }
        }
    }

    void adjoint_into(std::span<const double> z, SectionedVector& out) const override {
        check_channel(z);
        check_input(out);
        auto flat = out.flat();
        for (std::size_t c = 0; c < cols(); ++c) {
            const double* col = entries_.data() + c * rows();
            double acc = 0.0;
            for (std::size_t i = 0; i < rows(); ++i) {
                acc += col[i] * z[i];
            }
            flat[c] = acc;
        }
    }

    void add_column(std::size_t section, std::size_t index, double scale, std::span<double> out) const override {
        check_channel(out);
        const double* col = entries_.data() + (section * section_size() + index) * rows();
        for (std::size_t i = 0; i < rows(); ++i) {
            out[i] += scale * col[i];
        }
    }

private:
    std::vector<double> entries_;
};

/// Subsampled Sylvester-Hadamard operator, never materialized. Section s uses a
/// Hadamard matrix of order N = 2^max(v, ceil(log2(n + 1))), its own n distinct rows
/// (the all-ones row 0 excluded), 2^v distinct columns (all of them when N = 2^v) and
/// a random +-1 sign per selected row, scaled by 1/sqrt(n) so every column has unit norm.
class HadamardOperator final : public SensingOperator {
public:
    explicit HadamardOperator(OperatorSpec spec) : SensingOperator(spec) {
        if (spec.section_bits == 0 || spec.section_bits > 24) {
            throw PreconditionViolation("hadamard operator needs 1 <= v <= 24");
        }
        unsigned order_bits = spec.section_bits;
        while ((std::size_t{1} << order_bits) < rows() + 1) {
            ++order_bits;
        }
        order_ = std::size_t{1} << order_bits;
        scale_ = 1.0 / std::sqrt(static_cast<double>(rows()));
        row_index_.resize(sections());
        row_sign_.resize(sections());
        col_index_.resize(sections());
        std::vector<std::uint32_t> pool;
        for (std::size_t s = 0; s < sections(); ++s) {
            std::mt19937_64 rng(derive_seed(spec.seed, 0x68616461ULL, s));
            pool.resize(order_ - 1);
            std::iota(pool.begin(), pool.end(), 1u);
            partial_shuffle(pool, rows(), rng);
            row_index_[s].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(rows()));
            row_sign_[s].resize(rows());
            for (std::size_t i = 0; i < rows(); ++i) {
                row_sign_[s][i] = (rng() & 1u) ? -1.0 : 1.0;
            }
            if (order_ == section_size()) {
                col_index_[s].resize(section_size());
                std::iota(col_index_[s].begin(), col_index_[s].end(), 0u);
            } else {
                pool.resize(order_);
                std::iota(pool.begin(), pool.end(), 0u);
                partial_shuffle(pool, section_size(), rng);
                col_index_[s].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(section_size()));
            }
        }
    }

    [[nodiscard]] std::size_t hadamard_order() const noexcept { return order_; }
    [[nodiscard]] const std::vector<std::uint32_t>& selected_rows(std::size_t section) const {
        return row_index_.at(section);
    }
    [[nodiscard]] const std::vector<std::uint32_t>& selected_cols(std::size_t section) const {
        return col_index_.at(section);
    }
    [[nodiscard]] const std::vector<double>& row_signs(std::size_t section) const { return row_sign_.at(section); }

    void forward_accumulate(const SectionedVector& m, double scale, std::span<double> out) const override {
        check_input(m);
        check_channel(out);
        std::vector<double> buf(order_);
        for (std::size_t s = 0; s < sections(); ++s) {
            const auto sec = m.section(s);
            if (std::all_of(sec.begin(), sec.end(), [](double x) { return x == 0.0; })) {
                continue;
            }
            std::fill(buf.begin(), buf.end(), 0.0);
            const auto& cols = col_index_[s];
            for (std::size_t k = 0; k < sec.size(); ++k) {
                buf[cols[k]] = sec[k];
            }
            fwht(buf);
            const auto& rows_sel = row_index_[s];
            const auto& signs = row_sign_[s];
            const double f = scale * scale_;
            for (std::size_t i = 0; i < rows(); ++i) {
                out[i] += f * signs[i] * buf[rows_sel[i]];
            }
        }
    }

    void adjoint_into(std::span<const double> z, SectionedVector& out) const override {
        check_channel(z);
        check_input(out);
        std::vector<double> buf(order_);
        for (std::size_t s = 0; s < sections(); ++s) {
            std::fill(buf.begin(), buf.end(), 0.0);
            const auto& rows_sel = row_index_[s];
            const auto& signs = row_sign_[s];
            for (std::size_t i = 0; i < rows(); ++i) {
                buf[rows_sel[i]] = signs[i] * z[i];
            }
            fwht(buf);
            auto sec = out.section(s);
            const auto& cols = col_index_[s];
            for (std::size_t k = 0; k < sec.size(); ++k) {
                sec[k] = scale_ * buf[cols[k]];
            }
        }
    }

    void add_column(std::size_t section, std::size_t index, double scale, std::span<double> out) const override {
        check_channel(out);
        const auto col = col_index_.at(section).at(index);
        const auto& rows_sel = row_index_[section];
        const auto& signs = row_sign_[section];
        const double f = scale * scale_;
        for (std::size_t i = 0; i < rows(); ++i) {
            out[i] += f * signs[i] * hadamard_entry(rows_sel[i], col);
        }
    }

private:
    static void partial_shuffle(std::vector<std::uint32_t>& pool, std::size_t count, std::mt19937_64& rng) {
        for (std::size_t i = 0; i < count; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
    }

    std::size_t order_ = 0;
    double scale_ = 1.0;
    std::vector<std::vector<std::uint32_t>> row_index_;
    std::vector<std::vector<double>> row_sign_;
    std::vector<std::vector<std::uint32_t>> col_index_;
};

inline std::shared_ptr<const SensingOperator> make_operator(const OperatorSpec& spec) {
    if (spec.kind == SensingKind::gaussian) {
        return std::make_shared<const GaussianOperator>(spec);
    }
    return std::make_shared<const HadamardOperator>(spec);
}

/// The stacked operator A D = [d_1 A_1, ..., d_G A_G].
class StackedOperator {
public:
    struct Member {
        std::shared_ptr<const SensingOperator> op;
        double amplitude = 1.0;
    };

    StackedOperator() = default;
    explicit StackedOperator(std::vector<Member> members) : members_(std::move(members)) {
        for (const auto& m : members_) {
            if (!m.op) {
                throw PreconditionViolation("stacked operator member is null");
            }
            if (m.op->rows() != members_.front().op->rows()) {
                throw DimensionMismatch("all stacked operators must share the same n");
            }
        }
    }

    [[nodiscard]] std::size_t groups() const noexcept { return members_.size(); }
    [[nodiscard]] std::size_t rows() const { return members_.empty() ? 0 : members_.front().op->rows(); }
    [[nodiscard]] const Member& member(std::size_t g) const { return members_.at(g); }
    [[nodiscard]] const std::vector<Member>& members() const noexcept { return members_; }

    /// sum_g d_g A_g s_g
    [[nodiscard]] std::vector<double> forward(std::span<const SectionedVector> states) const {
        if (states.size() != members_.size()) {
            throw DimensionMismatch("one state per group is required");
        }
        std::vector<double> out(rows(), 0.0);
        for (std::size_t g = 0; g < members_.size(); ++g) {
            members_[g].op->forward_accumulate(states[g], members_[g].amplitude, out);
        }
        return out;
    }

    /// Per-group A_g^T z; amplitudes are not applied.
    [[nodiscard]] std::vector<SectionedVector> adjoint(std::span<const double> z) const {
        std::vector<SectionedVector> out;
        out.reserve(members_.size());
        for (const auto& m : members_) {
            out.push_back(m.op->adjoint(z));
        }
        return out;
    }

    void adjoint_into(std::span<const double> z, std::vector<SectionedVector>& out) const {
        for (std::size_t g = 0; g < members_.size(); ++g) {
            members_[g].op->adjoint_into(z, out[g]);
        }
    }

private:
    std::vector<Member> members_;
};

}  // namespace codemix
