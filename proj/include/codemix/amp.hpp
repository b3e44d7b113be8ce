#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "codemix/bp.hpp"
#include "codemix/error.hpp"
#include "codemix/factor_graph.hpp"
#include "codemix/sectioned_vector.hpp"
#include "codemix/sensing.hpp"

namespace codemix {

inline constexpr double kPriorClamp = 1e-12;

namespace detail {

inline double pme_log_odds(double q, double r, double d, double tau) noexcept {
    return std::log(q) - std::log1p(-q) + (2.0 * r * d - d * d) / (2.0 * tau * tau);
}

}  // namespace detail

/// Posterior probability that an entry equals one given r = d * s + tau * noise and
/// prior P(s = 1) = q. Evaluated as a logistic of the log-odds so nothing overflows.
[[nodiscard]] inline double pme(double q, double r, double d, double tau) noexcept {
    if (q <= 0.0) {
        return 0.0;
    }
    if (q >= 1.0) {
        return 1.0;
    }
    const double logit = detail::pme_log_odds(q, r, d, tau);
    if (logit >= 0.0) {
        return 1.0 / (1.0 + std::exp(-logit));
    }
    const double e = std::exp(logit);
    return e / (1.0 + e);
}

/// d pme / d r with the prior held fixed: (d / tau^2) s (1 - s), with s (1 - s) taken
/// from the log-odds so it keeps full relative precision when s is close to one.
[[nodiscard]] inline double pme_derivative(double q, double r, double d, double tau) noexcept {
    if (q <= 0.0 || q >= 1.0) {
        return 0.0;
    }
    const double e = std::exp(-std::abs(detail::pme_log_odds(q, r, d, tau)));
    return d / (tau * tau) * e / ((1.0 + e) * (1.0 + e));
}

/// Probability that at least one of `active` users picks a given index: 1 - (1 - p)^K.
[[nodiscard]] inline double activity_prior(double p, std::size_t active) noexcept {
    if (active == 0 || p <= 0.0) {
        return 0.0;
    }
    if (p >= 1.0) {
        return 1.0;
    }
    return -std::expm1(static_cast<double>(active) * std::log1p(-p));
}

[[nodiscard]] inline double uninformative_prior(unsigned section_bits, std::size_t active) noexcept {
    return activity_prior(std::ldexp(1.0, -static_cast<int>(section_bits)), active);
}

struct DenoiserOptions {
    bool use_bp = true;
    unsigned bp_rounds = 1;
};

/// Per-group denoiser state: output, priors and the BP engine scratch.
struct GroupDenoiser {
    explicit GroupDenoiser(const FactorGraph& g) : graph(&g), engine(g) {}

    const FactorGraph* graph;
    BpEngine engine;
    std::vector<double> local;
    std::vector<double> belief;
    std::size_t degenerate_sections = 0;
};

/// Dynamic denoiser: uninformative PME -> one BP round on the outer graph -> priors
/// from the normalized section beliefs -> PME with those priors.
inline void dynamic_denoise(GroupDenoiser& ws, const SectionedVector& r, double amplitude, std::size_t active,
                            double tau, const DenoiserOptions& options, SectionedVector& s_next,
                            SectionedVector& priors) {
    const auto& graph = *ws.graph;
    if (!(tau > 0.0)) {
        throw PreconditionViolation("tau must be positive");
    }
    if (r.sections() != graph.num_sections() || r.section_bits() != graph.section_bits()) {
        throw DimensionMismatch("effective observation shape does not match the outer graph");
    }
    if (!s_next.same_shape(r)) {
        s_next = SectionedVector(r.sections(), r.section_bits());
    }
    if (!priors.same_shape(r)) {
        priors = SectionedVector(r.sections(), r.section_bits());
    }
    auto out = s_next.flat();
    auto q = priors.flat();
    const auto obs = r.flat();
    if (active == 0) {
        std::fill(out.begin(), out.end(), 0.0);
        std::fill(q.begin(), q.end(), 0.0);
        return;
    }
    const double q0 = uninformative_prior(graph.section_bits(), active);
    if (!options.use_bp || options.bp_rounds == 0) {
        for (std::size_t i = 0; i < obs.size(); ++i) {
            q[i] = q0;
            out[i] = pme(q0, obs[i], amplitude, tau);
        }
        return;
    }
    if (options.bp_rounds >= graph.girth()) {
        throw PreconditionViolation("BP rounds inside the denoiser must stay below the girth");
    }
    ws.local.resize(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
        ws.local[i] = pme(q0, obs[i], amplitude, tau);
    }
    ws.engine.run(ws.local, options.bp_rounds);
    const std::size_t n = graph.section_size();
    ws.belief.resize(n);
    ws.degenerate_sections = 0;
    for (std::size_t s = 0; s < graph.num_sections(); ++s) {
        ws.engine.extrinsic(s, ws.belief);
        const double total = std::accumulate(ws.belief.begin(), ws.belief.end(), 0.0);
        auto qs = priors.section(s);
        if (!(total > 0.0) || !std::isfinite(total)) {
            ++ws.degenerate_sections;
            std::fill(qs.begin(), qs.end(), q0);
            continue;
        }
        const double inv = 1.0 / total;
        for (std::size_t k = 0; k < n; ++k) {
            qs[k] = std::clamp(activity_prior(ws.belief[k] * inv, active), kPriorClamp, 1.0 - kPriorClamp);
        }
    }
    for (std::size_t i = 0; i < obs.size(); ++i) {
        out[i] = pme(q[i], obs[i], amplitude, tau);
    }
}

/// Closed-form divergence of D * eta: (||D^2 eta||_1 - ||D eta||_2^2) / tau^2.
[[nodiscard]] inline double onsager_divergence(std::span<const SectionedVector> states,
                                               std::span<const double> amplitudes, double tau) {
    if (states.size() != amplitudes.size()) {
        throw DimensionMismatch("one amplitude per group is required");
    }
    double total = 0.0;
    for (std::size_t g = 0; g < states.size(); ++g) {
        const double d2 = amplitudes[g] * amplitudes[g];
        double l1 = 0.0;
        double l2 = 0.0;
        for (double x : states[g].flat()) {
            l1 += x;
            l2 += x * x;
        }
        total += d2 * (l1 - l2);
    }
    return total / (tau * tau);
}

struct AmpOptions {
    unsigned iterations = 15;
    double tau_floor = 1e-12;
    DenoiserOptions denoiser{};
};

struct AmpResult {
    std::vector<SectionedVector> states;
    std::vector<SectionedVector> priors;
    std::vector<double> tau_trace;  // tau_0 (from y) followed by tau after each iteration
    std::size_t degenerate_beliefs = 0;
    bool diverged = false;
};

using TraceSink = std::function<void(const nlohmann::json&)>;

/// Multi-group AMP with the dynamic denoiser and closed-form Onsager correction.
/// s^0 = 0, z^0 = y, tau_t^2 = ||z^t||^2 / n.
inline AmpResult amp_decode(std::span<const double> y, const StackedOperator& stacked,
                            std::span<const FactorGraph* const> graphs, std::span<const std::size_t> active,
                            const AmpOptions& options = {}, const TraceSink& trace = {}) {
    const std::size_t groups = stacked.groups();
    if (graphs.size() != groups || active.size() != groups) {
        throw DimensionMismatch("one graph and one occupancy per group are required");
    }
    if (options.iterations < 1) {
        throw PreconditionViolation("AMP needs at least one iteration");
    }
    if (y.size() != stacked.rows()) {
        throw DimensionMismatch("observation length does not match n");
    }
    const double n = static_cast<double>(y.size());
    std::vector<double> amplitudes(groups);
    std::vector<std::unique_ptr<GroupDenoiser>> denoisers;
    AmpResult result;
    for (std::size_t g = 0; g < groups; ++g) {
        amplitudes[g] = stacked.member(g).amplitude;
        const auto& op = *stacked.member(g).op;
        if (op.sections() != graphs[g]->num_sections() || op.section_bits() != graphs[g]->section_bits()) {
            throw DimensionMismatch("operator and outer graph disagree on (L, v)");
        }
        denoisers.push_back(std::make_unique<GroupDenoiser>(*graphs[g]));
        result.states.emplace_back(op.sections(), op.section_bits());
        result.priors.emplace_back(op.sections(), op.section_bits());
    }
    auto norm_tau = [&](std::span<const double> z) {
        double acc = 0.0;
        for (double x : z) {
            acc += x * x;
        }
        return std::max(std::sqrt(acc / n), options.tau_floor);
    };

    std::vector<double> z(y.begin(), y.end());
    double tau = norm_tau(z);
    result.tau_trace.push_back(tau);
    std::vector<SectionedVector> r = result.states;
    std::vector<SectionedVector> next = result.states;
    unsigned rising = 0;

    for (unsigned t = 0; t < options.iterations; ++t) {
        stacked.adjoint_into(z, r);
        for (std::size_t g = 0; g < groups; ++g) {
            auto rf = r[g].flat();
            const auto sf = result.states[g].flat();
            for (std::size_t i = 0; i < rf.size(); ++i) {
                rf[i] += amplitudes[g] * sf[i];
            }
        }
        std::size_t degenerate = 0;
        for (std::size_t g = 0; g < groups; ++g) {
            dynamic_denoise(*denoisers[g], r[g], amplitudes[g], active[g], tau, options.denoiser, next[g],
                            result.priors[g]);
            degenerate += denoisers[g]->degenerate_sections;
        }
        result.degenerate_beliefs += degenerate;
        const double div = onsager_divergence(next, amplitudes, tau);
        const auto fitted = stacked.forward(next);
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = y[i] - fitted[i] + z[i] / n * div;
        }
        std::swap(result.states, next);
        const double prev = tau;
        tau = norm_tau(z);
        result.tau_trace.push_back(tau);
        if (trace) {
            trace({{"event", "amp_iteration"},
                   {"t", t + 1},
                   {"tau", tau},
                   {"residual_norm", tau * std::sqrt(n)},
                   {"onsager_divergence", div},
                   {"degenerate_beliefs", degenerate}});
        }
        rising = (tau > prev && tau > result.tau_trace.front()) ? rising + 1 : 0;
        if (rising >= 3) {
            result.diverged = true;
            break;
        }
    }
    return result;
}

}  // namespace codemix
