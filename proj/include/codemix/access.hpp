#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "codemix/amp.hpp"
#include "codemix/bits.hpp"
#include "codemix/error.hpp"
#include "codemix/extraction.hpp"
#include "codemix/factor_graph.hpp"
#include "codemix/rng.hpp"
#include "codemix/sensing.hpp"

namespace codemix {

/// One class of homogeneous users (a row of the scenario's `classes`).
struct ClassConfig {
    std::size_t sections = 16;     // L
    unsigned section_bits = 16;    // v
    Rational rate{1, 2};           // R
    std::size_t active_users = 25;
    SensingKind kind = SensingKind::hadamard;
    std::uint64_t sensing_seed = 1;
    std::uint64_t graph_seed = 1;
    bool random_coefficients = false;

    /// w = R L v; with binning the leading log2(G) of these bits select the bin.
    [[nodiscard]] std::size_t message_bits() const {
        FactorGraph::validate_rate(sections, rate);
        return sections * static_cast<std::size_t>(rate.num) / static_cast<std::size_t>(rate.den) * section_bits;
    }
};

enum class OccupancyMethod { lmmse, round, oracle };

struct BinningConfig {
    std::size_t bins = 1;  // G, a power of two
    double binid_power_fraction = 0.002;
    OccupancyMethod estimator = OccupancyMethod::lmmse;
    bool known_total = true;  // K given to the receiver

    [[nodiscard]] unsigned select_bits() const { return static_cast<unsigned>(std::countr_zero(bins)); }
};

enum class ReceiverMode { coded_demixing, tin, sic };

struct AmpSettings {
    unsigned iterations = 15;
    std::size_t delta = 10;
    unsigned bp_rounds = 10;  // extraction-time BP
    bool use_bp = true;       // BP inside the AMP denoiser
    bool early_stop = true;
};

struct Scenario {
    std::size_t channel_uses = 38400;  // n (payload part)
    std::vector<ClassConfig> classes{ClassConfig{}};
    BinningConfig binning{};
    ReceiverMode mode = ReceiverMode::coded_demixing;
    bool sic_outer = false;
    double ebno_db = 2.0;
    std::size_t trials = 100;
    std::uint64_t seed = 1;
    AmpSettings amp{};
};

/// Per-user power P from Eb/N0 = n P / (2 w).
[[nodiscard]] inline double power_from_ebno(double ebno_db, std::size_t n, std::size_t message_bits) {
    return 2.0 * static_cast<double>(message_bits) * std::pow(10.0, ebno_db / 10.0) / static_cast<double>(n);
}

/// Amplitude d on unit-norm columns so that E||d A m||^2 = fraction * n P over L sections.
[[nodiscard]] inline double amplitude_from_ebno(double ebno_db, std::size_t n, std::size_t message_bits,
                                                std::size_t sections, double power_fraction) {
    const double p = power_from_ebno(ebno_db, n, message_bits);
    return std::sqrt(power_fraction * static_cast<double>(n) * p / static_cast<double>(sections));
}

/// Receiver-visible parameters of one group (a class, or one bin of a class).
struct GroupConfig {
    std::size_t id = 0;
    std::size_t class_index = 0;
    int bin = -1;
    double amplitude = 0.0;  // d_g
    double power = 0.0;      // P_g
    std::size_t message_bits = 0;
    std::shared_ptr<const SensingOperator> op;
    std::shared_ptr<const FactorGraph> graph;
};

/// Immutable encoder/receiver structure for a scenario at one Eb/N0.
class AccessSystem {
public:
    AccessSystem(const Scenario& scenario, double ebno_db) : scenario_(scenario), ebno_db_(ebno_db) {
        if (scenario.classes.empty()) {
            throw ConfigError("scenario needs at least one class");
        }
        const auto bins = scenario.binning.bins;
        if (bins == 0 || !std::has_single_bit(bins)) {
            throw ConfigError("bin count G must be a power of two");
        }
        if (scenario.binning.binid_power_fraction < 0.0 || scenario.binning.binid_power_fraction > 0.05) {
            throw ConfigError("bin-ID power fraction must lie in [0, 0.05]");
        }
        if (bins > 1 && scenario.classes.size() != 1) {
            throw ConfigError("stochastic binning needs exactly one class");
        }
        if (scenario.mode != ReceiverMode::coded_demixing && bins > 1) {
            throw ConfigError("TIN/SIC baselines apply to independent classes, not bins");
        }
        if (scenario.mode == ReceiverMode::sic && scenario.classes.size() != 2) {
            throw ConfigError("the SIC baseline needs exactly two classes");
        }
        if (!scenario.binning.known_total && bins == 1) {
            throw ConfigError("unknown K needs bin identification sequences (G > 1)");
        }
        const std::size_t n = scenario.channel_uses;
        for (std::size_t c = 0; c < scenario.classes.size(); ++c) {
            const auto& cls = scenario.classes[c];
            const std::size_t copies = bins;
            if (bins > 1 && scenario.binning.select_bits() > cls.section_bits) {
                throw ConfigError("bin-select bits must fit in the first section");
            }
            for (std::size_t b = 0; b < copies; ++b) {
                GroupConfig g;
                g.id = groups_.size();
                g.class_index = c;
                g.bin = bins > 1 ? static_cast<int>(b) : -1;
                g.message_bits = cls.message_bits();
                const std::uint64_t sseed = bins > 1 ? derive_seed(cls.sensing_seed, b) : cls.sensing_seed;
                const std::uint64_t gseed = bins > 1 ? derive_seed(cls.graph_seed, b) : cls.graph_seed;
                g.op = make_operator({cls.kind, n, cls.section_bits, cls.sections, sseed});
                g.graph = std::make_shared<const FactorGraph>(
                    build_graph(cls.sections, cls.section_bits, cls.rate, gseed, {cls.random_coefficients}));
                groups_.push_back(std::move(g));
            }
        }
        set_ebno(ebno_db);
    }

    void set_ebno(double ebno_db) {
        ebno_db_ = ebno_db;
        const double fraction = payload_fraction();
        for (auto& g : groups_) {
            const auto& cls = scenario_.classes[g.class_index];
            g.power = power_from_ebno(ebno_db, channel_uses(), g.message_bits);
            g.amplitude = amplitude_from_ebno(ebno_db, channel_uses(), g.message_bits, cls.sections, fraction);
        }
    }

    [[nodiscard]] const Scenario& scenario() const noexcept { return scenario_; }
    [[nodiscard]] double ebno_db() const noexcept { return ebno_db_; }
    [[nodiscard]] std::size_t channel_uses() const noexcept { return scenario_.channel_uses; }
    [[nodiscard]] std::size_t bins() const noexcept { return scenario_.binning.bins; }
    [[nodiscard]] bool binning() const noexcept { return bins() > 1; }
    [[nodiscard]] const std::vector<GroupConfig>& groups() const noexcept { return groups_; }
    [[nodiscard]] const GroupConfig& group(std::size_t g) const { return groups_.at(g); }
    [[nodiscard]] std::size_t num_classes() const noexcept { return scenario_.classes.size(); }

    [[nodiscard]] double payload_fraction() const noexcept {
        return binning() ? 1.0 - scenario_.binning.binid_power_fraction : 1.0;
    }

    /// Amplitude of each user's bin-ID symbol: sqrt(fraction * n P).
    [[nodiscard]] double binid_amplitude() const {
        if (!binning()) {
            return 0.0;
        }
        return std::sqrt(scenario_.binning.binid_power_fraction * static_cast<double>(channel_uses()) *
                         groups_.front().power);
    }

    /// Group a message from class `class_index` is sent in.
    [[nodiscard]] std::size_t group_for(std::size_t class_index, const Bits& message) const {
        if (!binning()) {
            return class_index;
        }
        return static_cast<std::size_t>(bits_to_uint(message, 0, scenario_.binning.select_bits()));
    }

    [[nodiscard]] StackedOperator stacked(std::span<const std::size_t> which) const {
        std::vector<StackedOperator::Member> members;
        for (auto g : which) {
            members.push_back({groups_.at(g).op, groups_.at(g).amplitude});
        }
        return StackedOperator(std::move(members));
    }

private:
    Scenario scenario_;
    double ebno_db_;
    std::vector<GroupConfig> groups_;
};

/// What one user puts on the air: G bin-ID uses (empty when G = 1) and n payload uses.
struct TransmitFrame {
    std::vector<double> binid;
    std::vector<double> payload;

    [[nodiscard]] double energy() const {
        double e = 0.0;
        for (double x : binid) {
            e += x * x;
        }
        for (double x : payload) {
            e += x * x;
        }
        return e;
    }
};

struct EncodedUser {
    std::size_t group = 0;
    Codeword codeword;
    TransmitFrame frame;
};

/// Adds d_g * A_g m(codeword) to `out`.
inline void add_codeword_signal(const GroupConfig& g, const Codeword& word, double scale, std::span<double> out) {
    for (std::size_t s = 0; s < word.size(); ++s) {
        g.op->add_column(s, word[s], scale * g.amplitude, out);
    }
}

/// Full transmitter: bin selection from the leading bits, outer encoding of the message,
/// sparse mapping, sensing, and the scaled bin-ID basis vector.
inline EncodedUser encode_user(const AccessSystem& system, std::size_t class_index, const Bits& message) {
    if (class_index >= system.num_classes()) {
        throw PreconditionViolation("class index out of range");
    }
    const auto expected = system.scenario().classes[class_index].message_bits();
    if (message.size() != expected) {
        throw LengthMismatch("message length " + std::to_string(message.size()) + " != w = " +
                             std::to_string(expected));
    }
    EncodedUser user;
    user.group = system.group_for(class_index, message);
    const auto& g = system.group(user.group);
    user.codeword = encode(*g.graph, message);
    user.frame.payload.assign(system.channel_uses(), 0.0);
    add_codeword_signal(g, user.codeword, 1.0, user.frame.payload);
    if (system.binning()) {
        user.frame.binid.assign(system.bins(), 0.0);
        user.frame.binid[user.group] = system.binid_amplitude();
    }
    return user;
}

struct OccupancyEstimate {
    std::vector<std::size_t> per_bin;
    std::size_t total = 0;
};

/// Bin occupancy from the received bin-ID sequence y = a * k + noise (unit variance).
/// lmmse uses the multinomial prior (mean K/G, covariance K (diag(p) - p p^T), p = 1/G);
/// round divides by a and rounds. Both clamp to nonnegative integers.
inline OccupancyEstimate estimate_occupancy(std::span<const double> y_binid, std::optional<std::size_t> total_active,
                                            double binid_amplitude, OccupancyMethod method,
                                            std::span<const std::size_t> true_counts = {}) {
    const std::size_t bins = y_binid.size();
    OccupancyEstimate est;
    est.per_bin.assign(bins, 0);
    auto finish = [&] {
        est.total = 0;
        for (auto k : est.per_bin) {
            est.total += k;
        }
        return est;
    };
    auto to_count = [](double x) { return static_cast<std::size_t>(std::max(0.0, std::round(x))); };
    switch (method) {
    case OccupancyMethod::oracle:
        if (true_counts.size() != bins) {
            throw ConfigError("oracle occupancy needs the true per-bin counts");
        }
        std::copy(true_counts.begin(), true_counts.end(), est.per_bin.begin());
        return finish();
    case OccupancyMethod::round:
        if (!(binid_amplitude > 0.0)) {
            throw ConfigError("rounding estimator needs a positive bin-ID amplitude");
        }
        for (std::size_t g = 0; g < bins; ++g) {
            est.per_bin[g] = to_count(y_binid[g] / binid_amplitude);
        }
        return finish();
    case OccupancyMethod::lmmse: {
        if (!total_active) {
            throw ConfigError("the LMMSE occupancy estimator needs a known K");
        }
        const double k = static_cast<double>(total_active.value_or(0));
        const double mean = k / static_cast<double>(bins);
        // The prior covariance is (K/G) times the projector orthogonal to the all-ones
        // vector, so the LMMSE gain is a scalar on that subspace and zero along ones.
        const double sigma2 = mean;
        const double gain = binid_amplitude * sigma2 / (binid_amplitude * binid_amplitude * sigma2 + 1.0);
        double avg = 0.0;
        for (double v : y_binid) {
            avg += v;
        }
        avg /= static_cast<double>(bins);
        for (std::size_t g = 0; g < bins; ++g) {
            est.per_bin[g] = to_count(mean + gain * (y_binid[g] - avg));
        }
        return finish();
    }
    }
    throw ConfigError("invalid occupancy method");
}

/// Drops candidates whose leading bin-select bits do not spell the bin index.
inline std::size_t prune_bin_inconsistent(std::vector<Candidate>& candidates, const FactorGraph& graph,
                                          std::size_t bin, unsigned select_bits) {
    if (select_bits == 0) {
        return 0;
    }
    const unsigned shift = graph.section_bits() - select_bits;
    const auto before = candidates.size();
    std::erase_if(candidates, [&](const Candidate& c) { return (c.codeword.at(0) >> shift) != bin; });
    return before - candidates.size();
}

struct ReceiverInput {
    std::span<const double> payload;
    std::span<const double> binid;
    std::optional<std::size_t> total_active;  // K when known to the receiver
    std::vector<std::size_t> group_counts;    // true per-group counts (classes, oracle)
};

struct ReceiverOutput {
    DecodedList list;
    OccupancyEstimate occupancy;
    std::vector<double> tau_trace;
    bool diverged = false;
    std::size_t degenerate_beliefs = 0;
    std::size_t pruned = 0;
    ExtractionStats extraction;
};

namespace detail {

struct PassResult {
    std::vector<GroupCandidates> lists;
};

// Joint AMP over `which`, extraction and bin pruning for each member group.
inline PassResult decode_groups(const AccessSystem& system, std::span<const double> y,
                                std::span<const std::size_t> which, std::span<const std::size_t> active,
                                ReceiverOutput& out, const TraceSink& trace) {
    const auto& amp = system.scenario().amp;
    const auto stacked = system.stacked(which);
    std::vector<const FactorGraph*> graphs;
    for (auto g : which) {
        graphs.push_back(system.group(g).graph.get());
    }
    AmpOptions options;
    options.iterations = amp.iterations;
    options.denoiser.use_bp = amp.use_bp;
    const auto result = amp_decode(y, stacked, graphs, active, options, trace);
    out.tau_trace.insert(out.tau_trace.end(), result.tau_trace.begin(), result.tau_trace.end());
    out.diverged = out.diverged || result.diverged;
    out.degenerate_beliefs += result.degenerate_beliefs;
    const ExtractionConfig cfg{amp.delta, amp.bp_rounds, amp.early_stop};
    PassResult pass;
    for (std::size_t i = 0; i < which.size(); ++i) {
        const auto& g = system.group(which[i]);
        GroupCandidates list{g.id, g.bin, g.graph.get(), extract_group(result.states[i], *g.graph, active[i], cfg, &out.extraction)};
        if (system.binning()) {
            out.pruned += prune_bin_inconsistent(list.candidates, *g.graph, static_cast<std::size_t>(g.bin),
                                                 system.scenario().binning.select_bits());
        }
        pass.lists.push_back(std::move(list));
    }
    return pass;
}

inline void subtract_messages(const AccessSystem& system, const std::vector<DecodedEntry>& entries,
                              std::span<double> y) {
    for (const auto& e : entries) {
        const auto& g = system.group(e.group);
        add_codeword_signal(g, encode(*g.graph, e.message), -1.0, y);
    }
}

// Per-group truncation to each group's own count (independent classes).
inline DecodedList merge_per_group(std::span<const GroupCandidates> lists, std::span<const std::size_t> limits) {
    DecodedList out;
    for (std::size_t i = 0; i < lists.size(); ++i) {
        auto part = merge_and_truncate(lists.subspan(i, 1), limits[i]);
        out.entries.insert(out.entries.end(), part.entries.begin(), part.entries.end());
    }
    return out;
}

}  // namespace detail

/// Runs the selected receiver on one channel output.
inline ReceiverOutput run_receiver(const AccessSystem& system, const ReceiverInput& input, ReceiverMode mode,
                                   bool sic_outer, const TraceSink& trace = {}) {
    const std::size_t groups = system.groups().size();
    if (input.payload.size() != system.channel_uses()) {
        throw DimensionMismatch("payload observation length does not match n");
    }
    if (mode == ReceiverMode::sic && groups != 2) {
        throw ConfigError("the SIC baseline needs exactly two classes");
    }
    if (mode != ReceiverMode::coded_demixing && system.binning()) {
        throw ConfigError("TIN/SIC baselines apply to independent classes, not bins");
    }
    ReceiverOutput out;
    const auto& binning = system.scenario().binning;

    // occupancy per group
    if (system.binning()) {
        if (input.binid.size() != system.bins()) {
            throw DimensionMismatch("bin-ID observation must have G entries");
        }
        std::optional<std::size_t> known;
        if (binning.known_total) {
            known = input.total_active;
        }
        const auto method = binning.known_total ? binning.estimator
                                                : (binning.estimator == OccupancyMethod::oracle ? OccupancyMethod::oracle
                                                                                                : OccupancyMethod::round);
        out.occupancy = estimate_occupancy(input.binid, known, system.binid_amplitude(), method, input.group_counts);
    } else {
        if (input.group_counts.size() != groups) {
            throw ConfigError("per-class active counts are required without binning");
        }
        out.occupancy.per_bin = input.group_counts;
        out.occupancy.total = 0;
        for (auto k : input.group_counts) {
            out.occupancy.total += k;
        }
    }
    const auto& khat = out.occupancy.per_bin;
    const std::size_t limit = (binning.known_total && input.total_active) ? *input.total_active : out.occupancy.total;

    std::vector<std::size_t> all(groups);
    std::iota(all.begin(), all.end(), std::size_t{0});

    if (mode == ReceiverMode::tin) {
        std::vector<GroupCandidates> lists;
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t one[] = {g};
            const std::size_t k[] = {khat[g]};
            auto pass = detail::decode_groups(system, input.payload, one, k, out, trace);
            lists.push_back(std::move(pass.lists.front()));
        }
        out.list = detail::merge_per_group(lists, khat);
        return out;
    }
    if (mode == ReceiverMode::sic) {
        std::vector<double> residual(input.payload.begin(), input.payload.end());
        std::vector<GroupCandidates> lists;
        for (std::size_t g = 0; g < 2; ++g) {
            const std::size_t one[] = {g};
            const std::size_t k[] = {khat[g]};
            auto pass = detail::decode_groups(system, residual, one, k, out, trace);
            const std::size_t lim[] = {khat[g]};
            auto decoded = detail::merge_per_group(pass.lists, lim);
            if (g == 0) {
                detail::subtract_messages(system, decoded.entries, residual);
            }
            lists.push_back(std::move(pass.lists.front()));
        }
        out.list = detail::merge_per_group(lists, khat);
        return out;
    }

    auto merge = [&](std::span<const GroupCandidates> lists, std::span<const std::size_t> k, std::size_t lim) {
        return system.binning() ? merge_and_truncate(lists, lim) : detail::merge_per_group(lists, k);
    };
    auto first = detail::decode_groups(system, input.payload, all, khat, out, trace);
    out.list = merge(first.lists, khat, limit);
    if (!sic_outer) {
        return out;
    }
    const auto keep = std::min<std::size_t>(out.list.size(), static_cast<std::size_t>(std::ceil(0.7 * static_cast<double>(limit))));
    std::vector<DecodedEntry> kept(out.list.entries.begin(), out.list.entries.begin() + static_cast<std::ptrdiff_t>(keep));
    std::vector<double> residual(input.payload.begin(), input.payload.end());
    detail::subtract_messages(system, kept, residual);
    std::vector<std::size_t> remaining(khat.begin(), khat.end());
    for (const auto& e : kept) {
        if (remaining[e.group] > 0) {
            --remaining[e.group];
        }
    }
    auto second = detail::decode_groups(system, residual, all, remaining, out, trace);
    auto rest = merge(second.lists, remaining, limit - keep);
    DecodedList combined;
    combined.entries = kept;
    combined.entries.insert(combined.entries.end(), rest.entries.begin(), rest.entries.end());
    sort_and_truncate(combined, limit);
    out.list = std::move(combined);
    return out;
}

}  // namespace codemix
