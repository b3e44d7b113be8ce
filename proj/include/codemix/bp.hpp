#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "codemix/error.hpp"
#include "codemix/factor_graph.hpp"
#include "codemix/wht.hpp"

namespace codemix {

/// Nonnegative weights over the 2^v values of one section.
using SectionPmf = std::vector<double>;

/// Floor applied to message weights before they enter a product.
inline constexpr double kWeightFloor = 1e-30;

namespace detail {

// dst[c * x] = src[x]
inline void permute_by_coefficient(std::span<const double> src, std::uint32_t coeff, const GaloisField& field,
                                   std::span<double> dst) {
    if (coeff == 1) {
        std::copy(src.begin(), src.end(), dst.begin());
        return;
    }
    for (std::uint32_t x = 0; x < src.size(); ++x) {
        dst[field.mul(coeff, x)] = src[x];
    }
}

// dst[x] = src[c * x]
inline void unpermute_by_coefficient(std::span<const double> src, std::uint32_t coeff, const GaloisField& field,
                                     std::span<double> dst) {
    if (coeff == 1) {
        std::copy(src.begin(), src.end(), dst.begin());
        return;
    }
    for (std::uint32_t x = 0; x < dst.size(); ++x) {
        dst[x] = src[field.mul(coeff, x)];
    }
}

inline double normalize_in_place(std::span<double> w) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (total > 0.0 && std::isfinite(total)) {
        const double inv = 1.0 / total;
        for (auto& x : w) {
            x *= inv;
        }
    }
    return total;
}

// Output for position `target` of a check whose neighbor transforms are in
// `transforms[j]` (WHT of the coefficient-permuted incoming message).
inline void combine_transforms(const CheckNode& check, std::span<double* const> transforms,
                               std::size_t target, const GaloisField& field, std::span<double> scratch,
                               std::span<double> out) {
    const std::size_t n = out.size();
    const bool direct = check.coefficients[target] == 1;
    double* acc = direct ? out.data() : scratch.data();
    bool first = true;
    for (std::size_t j = 0; j < check.degree(); ++j) {
        if (j == target) {
            continue;
        }
        const double* t = transforms[j];
        if (first) {
            std::copy(t, t + n, acc);
            first = false;
        } else {
            for (std::size_t k = 0; k < n; ++k) {
                acc[k] *= t[k];
            }
        }
    }
    if (first) {
        std::fill(acc, acc + n, 1.0);
    }
    std::span<double> a(acc, n);
    fwht(a);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& x : a) {
        x = std::max(0.0, x * inv_n);
    }
    if (!direct) {
        unpermute_by_coefficient(a, check.coefficients[target], field, out);
    }
}

}  // namespace detail

/// Check-to-variable message: the constrained sum over all index tuples of the
/// other neighbors that satisfy the check, computed in the Walsh-Hadamard domain.
/// `incoming[j]` is the message from the j-th neighbor; the target's entry is ignored.
/// The output is not normalized.
inline SectionPmf check_to_variable(const CheckNode& check, std::span<const SectionPmf> incoming, std::size_t target,
                                    const GaloisField& field) {
    if (incoming.size() != check.degree() || target >= check.degree()) {
        throw DimensionMismatch("check_to_variable expects one message per neighbor");
    }
    const std::size_t n = field.size();
    std::vector<std::vector<double>> transforms(check.degree(), std::vector<double>(n, 0.0));
    std::vector<double*> views(check.degree());
    for (std::size_t j = 0; j < check.degree(); ++j) {
        if (j == target) {
            continue;
        }
        if (incoming[j].size() != n) {
            throw DimensionMismatch("message length must be 2^v");
        }
        detail::permute_by_coefficient(incoming[j], check.coefficients[j], field, transforms[j]);
        fwht(transforms[j]);
    }
    for (std::size_t j = 0; j < check.degree(); ++j) {
        views[j] = transforms[j].data();
    }
    SectionPmf out(n);
    std::vector<double> scratch(n);
    detail::combine_transforms(check, views, target, field, scratch, out);
    return out;
}

/// Variable-to-check message: normalized product of the local estimate and the
/// messages from the other checks. Weights are floored at `floor` before the product.
inline SectionPmf variable_to_check(std::span<const double> local, std::span<const SectionPmf> other_check_msgs,
                                    double floor = 0.0) {
    SectionPmf out(local.size());
    for (std::size_t k = 0; k < local.size(); ++k) {
        out[k] = std::max(local[k], floor);
    }
    for (const auto& msg : other_check_msgs) {
        if (msg.size() != local.size()) {
            throw DimensionMismatch("message length must match the local estimate");
        }
        for (std::size_t k = 0; k < out.size(); ++k) {
            out[k] *= std::max(msg[k], floor);
        }
    }
    if (!(detail::normalize_in_place(out) > 0.0)) {
        throw DegenerateMessage("variable-to-check product is identically zero");
    }
    return out;
}

/// Flooding belief propagation on one outer graph. Holds per-edge message buffers,
/// so one engine must not be shared between concurrent decodes.
class BpEngine {
public:
    explicit BpEngine(const FactorGraph& graph)
        : graph_(&graph), n_(graph.section_size()) {
        const auto& checks = graph.checks();
        edge_offset_.resize(checks.size() + 1, 0);
        std::size_t max_degree = 0;
        for (std::size_t a = 0; a < checks.size(); ++a) {
            edge_offset_[a + 1] = edge_offset_[a] + checks[a].degree();
            max_degree = std::max(max_degree, checks[a].degree());
        }
        const std::size_t edges = edge_offset_.back();
        v2c_.assign(edges * n_, 0.0);
        c2v_.assign(edges * n_, 1.0);
        section_edges_.assign(graph.num_sections(), {});
        for (std::size_t a = 0; a < checks.size(); ++a) {
            for (std::size_t j = 0; j < checks[a].degree(); ++j) {
                section_edges_[checks[a].sections[j]].push_back(edge_offset_[a] + j);
            }
        }
        transforms_.assign(max_degree, std::vector<double>(n_));
        views_.assign(max_degree, nullptr);
        scratch_.resize(n_);
    }

    [[nodiscard]] const FactorGraph& graph() const noexcept { return *graph_; }

    /// Resets messages and runs `rounds` flooding rounds from the given local estimates
    /// (`locals` holds L consecutive blocks of 2^v nonnegative weights).
    void run(std::span<const double> locals, unsigned rounds) {
        if (locals.size() != graph_->num_sections() * n_) {
            throw DimensionMismatch("locals must hold L * 2^v weights");
        }
        std::fill(c2v_.begin(), c2v_.end(), 1.0);
        for (unsigned r = 0; r < rounds; ++r) {
            update_variables(locals);
            update_checks();
        }
    }

    /// Runs one more round on top of the current messages.
    void step(std::span<const double> locals) {
        update_variables(locals);
        update_checks();
    }

    /// Product of incoming check messages (unnormalized, floored before the product).
    void extrinsic(std::size_t section, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 1.0);
        for (auto e : section_edges_[section]) {
            const double* m = c2v_.data() + e * n_;
            for (std::size_t k = 0; k < n_; ++k) {
                out[k] *= std::max(m[k], kWeightFloor);
            }
        }
    }

    /// Normalized posterior: local estimate times all incoming check messages.
    void posterior(std::size_t section, std::span<const double> local, std::span<double> out) const {
        extrinsic(section, out);
        for (std::size_t k = 0; k < n_; ++k) {
            out[k] *= std::max(local[k], kWeightFloor);
        }
        detail::normalize_in_place(out);
    }

    [[nodiscard]] std::span<const double> check_message(std::size_t check, std::size_t position) const {
        return {c2v_.data() + (edge_offset_[check] + position) * n_, n_};
    }

private:
    void update_variables(std::span<const double> locals) {
        for (std::size_t s = 0; s < graph_->num_sections(); ++s) {
            const double* local = locals.data() + s * n_;
            const auto& edges = section_edges_[s];
            for (auto e : edges) {
                double* out = v2c_.data() + e * n_;
                for (std::size_t k = 0; k < n_; ++k) {
                    out[k] = std::max(local[k], kWeightFloor);
                }
                for (auto other : edges) {
                    if (other == e) {
                        continue;
                    }
                    const double* m = c2v_.data() + other * n_;
                    for (std::size_t k = 0; k < n_; ++k) {
                        out[k] *= std::max(m[k], kWeightFloor);
                    }
                }
                if (!(detail::normalize_in_place({out, n_}) > 0.0)) {
                    throw DegenerateMessage("variable-to-check product vanished in section " + std::to_string(s));
                }
            }
        }
    }

    void update_checks() {
        const auto& checks = graph_->checks();
        const auto& field = graph_->field();
        for (std::size_t a = 0; a < checks.size(); ++a) {
            const auto& check = checks[a];
            // variable-to-check buffers are rebuilt every round, so they are transformed in place
            for (std::size_t j = 0; j < check.degree(); ++j) {
                const std::span<double> in(v2c_.data() + (edge_offset_[a] + j) * n_, n_);
                if (check.coefficients[j] == 1) {
                    views_[j] = in.data();
                } else {
                    detail::permute_by_coefficient(in, check.coefficients[j], field, transforms_[j]);
                    views_[j] = transforms_[j].data();
                }
                fwht({views_[j], n_});
            }
            for (std::size_t j = 0; j < check.degree(); ++j) {
                std::span<double> out(c2v_.data() + (edge_offset_[a] + j) * n_, n_);
                detail::combine_transforms(check, std::span<double* const>(views_.data(), check.degree()), j,
                                           field, scratch_, out);
            }
        }
    }

    const FactorGraph* graph_;
    std::size_t n_;
    std::vector<std::size_t> edge_offset_;
    std::vector<std::vector<std::size_t>> section_edges_;
    std::vector<double> v2c_;
    std::vector<double> c2v_;
    std::vector<std::vector<double>> transforms_;
    std::vector<double*> views_;
    std::vector<double> scratch_;
};

/// Runs `rounds` BP rounds and returns, per section, the unnormalized product of the
/// incoming check messages. Requires rounds < girth.
inline std::vector<SectionPmf> section_beliefs(const FactorGraph& graph, std::span<const SectionPmf> locals,
                                               unsigned rounds) {
    if (rounds >= graph.girth()) {
        throw PreconditionViolation("BP rounds (" + std::to_string(rounds) + ") must be below the girth (" +
                                    std::to_string(graph.girth()) + ")");
    }
    if (locals.size() != graph.num_sections()) {
        throw DimensionMismatch("one local estimate per section is required");
    }
    const std::size_t n = graph.section_size();
    std::vector<double> flat;
    flat.reserve(graph.num_sections() * n);
    for (const auto& l : locals) {
        if (l.size() != n) {
            throw DimensionMismatch("local estimate length must be 2^v");
        }
        flat.insert(flat.end(), l.begin(), l.end());
    }
    BpEngine engine(graph);
    engine.run(flat, rounds);
    std::vector<SectionPmf> beliefs(graph.num_sections(), SectionPmf(n));
    for (std::size_t s = 0; s < graph.num_sections(); ++s) {
        engine.extrinsic(s, beliefs[s]);
    }
    return beliefs;
}

}  // namespace codemix
