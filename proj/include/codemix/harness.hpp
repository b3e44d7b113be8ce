#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "codemix/access.hpp"
#include "codemix/rng.hpp"
#include "codemix/scenario.hpp"

namespace codemix {

struct SentMessage {
    std::size_t class_index = 0;
    std::size_t group = 0;
    Bits message;
};

/// Counts for one class (or all classes pooled).
struct Tally {
    std::size_t sent = 0;
    std::size_t missed = 0;
    std::size_t recovered = 0;
    std::size_t false_alarms = 0;

    Tally& operator+=(const Tally& o) {
        sent += o.sent;
        missed += o.missed;
        recovered += o.recovered;
        false_alarms += o.false_alarms;
        return *this;
    }
    [[nodiscard]] double pupe() const { return sent == 0 ? 0.0 : static_cast<double>(missed) / static_cast<double>(sent); }
    [[nodiscard]] double md() const { return pupe(); }
    [[nodiscard]] double fa() const {
        return recovered == 0 ? 0.0 : static_cast<double>(false_alarms) / static_cast<double>(recovered);
    }
};

struct TrialOutcome {
    std::vector<SentMessage> sent;
    DecodedList recovered;
    std::vector<Tally> per_class;
    OccupancyEstimate occupancy;
    std::vector<double> tau_trace;
    bool diverged = false;
    std::size_t resampled_duplicates = 0;
    std::size_t degenerate_beliefs = 0;

    [[nodiscard]] Tally total() const {
        Tally t;
        for (const auto& c : per_class) {
            t += c;
        }
        return t;
    }
};

/// Scores a recovered list against the sent messages; matches are on (group, full message).
inline std::vector<Tally> score_trial(const AccessSystem& system, const std::vector<SentMessage>& sent,
                                      const DecodedList& recovered) {
    std::vector<Tally> per_class(system.num_classes());
    std::set<std::pair<std::size_t, Bits>> on_air;
    for (const auto& m : sent) {
        on_air.emplace(m.group, m.message);
        ++per_class[m.class_index].sent;
        if (!recovered.contains(m.group, m.message)) {
            ++per_class[m.class_index].missed;
        }
    }
    for (const auto& e : recovered.entries) {
        auto& t = per_class[system.group(e.group).class_index];
        ++t.recovered;
        if (!on_air.contains({e.group, e.message})) {
            ++t.false_alarms;
        }
    }
    return per_class;
}

/// One channel use of the whole system: draws distinct messages, superimposes the users,
/// adds unit-variance noise and runs the configured receiver.
inline TrialOutcome run_trial(const AccessSystem& system, std::uint64_t seed, const TraceSink& trace = {}) {
    const auto& sc = system.scenario();
    std::mt19937_64 rng(seed);
    TrialOutcome out;
    std::vector<double> payload(system.channel_uses(), 0.0);
    std::vector<double> binid(system.binning() ? system.bins() : 0, 0.0);
    std::vector<std::size_t> counts(system.groups().size(), 0);
    std::size_t total = 0;
    for (std::size_t c = 0; c < system.num_classes(); ++c) {
        const auto& cls = sc.classes[c];
        std::set<Bits> drawn;
        for (std::size_t u = 0; u < cls.active_users; ++u) {
            Bits msg = random_bits(cls.message_bits(), rng);
            while (drawn.contains(msg)) {
                ++out.resampled_duplicates;
                msg = random_bits(cls.message_bits(), rng);
            }
            drawn.insert(msg);
            auto user = encode_user(system, c, msg);
            for (std::size_t i = 0; i < payload.size(); ++i) {
                payload[i] += user.frame.payload[i];
            }
            for (std::size_t i = 0; i < binid.size(); ++i) {
                binid[i] += user.frame.binid[i];
            }
            ++counts[user.group];
            out.sent.push_back({c, user.group, std::move(msg)});
        }
        total += cls.active_users;
    }
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto& x : payload) {
        x += noise(rng);
    }
    for (auto& x : binid) {
        x += noise(rng);
    }
    if (trace && out.resampled_duplicates > 0) {
        trace({{"event", "duplicate_resampled"}, {"count", out.resampled_duplicates}});
    }
    ReceiverInput input{payload, binid, total, counts};
    auto rx = run_receiver(system, input, sc.mode, sc.sic_outer, trace);
    out.recovered = std::move(rx.list);
    out.occupancy = std::move(rx.occupancy);
    out.tau_trace = std::move(rx.tau_trace);
    out.diverged = rx.diverged;
    out.degenerate_beliefs = rx.degenerate_beliefs;
    out.per_class = score_trial(system, out.sent, out.recovered);
    return out;
}

/// Pooled counts: per class and overall.
struct Rates {
    std::vector<Tally> per_class;
    Tally all;
    std::size_t trials = 0;
};

inline Rates aggregate(std::span<const TrialOutcome> outcomes) {
    Rates r;
    r.trials = outcomes.size();
    for (const auto& o : outcomes) {
        if (r.per_class.size() < o.per_class.size()) {
            r.per_class.resize(o.per_class.size());
        }
        for (std::size_t c = 0; c < o.per_class.size(); ++c) {
            r.per_class[c] += o.per_class[c];
            r.all += o.per_class[c];
        }
    }
    return r;
}

struct PupeReport {
    std::vector<double> per_class;
    double overall = 0.0;
};

inline PupeReport compute_pupe(std::span<const TrialOutcome> outcomes) {
    const auto r = aggregate(outcomes);
    PupeReport p;
    for (const auto& t : r.per_class) {
        p.per_class.push_back(t.pupe());
    }
    p.overall = r.all.pupe();
    return p;
}

/// (Pr(MD), Pr(FA)) pooled over trials. An empty list has MD = 1 and FA = 0.
inline std::pair<double, double> compute_md_fa(std::span<const TrialOutcome> outcomes) {
    const auto r = aggregate(outcomes);
    return {r.all.md(), r.all.fa()};
}

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/// Wilson score interval for `successes` out of `total` at confidence given by z.
inline Interval wilson_interval(std::size_t successes, std::size_t total, double z = 1.959963984540054) {
    if (total == 0) {
        return {0.0, 1.0};
    }
    const double n = static_cast<double>(total);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    const double half = z / (1.0 + z2 / n) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// Runs `count` independent jobs on `workers` threads; results land at their own index.
template <typename Result, typename Job>
std::vector<Result> parallel_map(std::size_t count, unsigned workers, Job job) {
    std::vector<Result> results(count);
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto body = [&] {
        for (;;) {
            const auto i = next.fetch_add(1);
            if (i >= count) {
                return;
            }
            try {
                results[i] = job(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next = count;
            }
        }
    };
    if (workers == 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back(body);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return results;
}

/// Per-trial seed: counter-based split of the master seed by trial index only, so every
/// sweep point sees the same message/noise draws and worker count never matters.
[[nodiscard]] constexpr std::uint64_t trial_seed(std::uint64_t master, std::size_t trial) {
    return derive_seed(master, trial);
}

inline std::vector<TrialOutcome> run_trials(const AccessSystem& system, std::size_t trials, std::uint64_t master,
                                            unsigned workers) {
    return parallel_map<TrialOutcome>(trials, workers,
                                      [&](std::size_t t) { return run_trial(system, trial_seed(master, t)); });
}

enum class SweepAxis { ebno, k };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "ebno") {
        return SweepAxis::ebno;
    }
    if (s == "k") {
        return SweepAxis::k;
    }
    throw ConfigError("unknown sweep axis '" + s + "'");
}

struct SweepRow {
    double axis_value = 0.0;
    std::string group_id;  // class index, or "all"
    Tally tally;
    std::size_t trials = 0;
    Interval ci;
    std::string mode;
    std::size_t bins = 1;
};

struct SweepResult {
    std::vector<SweepRow> rows;
};

/// Scenario with the K of every class set to `k`.
inline Scenario with_active_users(Scenario s, std::size_t k) {
    for (auto& c : s.classes) {
        c.active_users = k;
    }
    return s;
}

inline std::vector<SweepRow> rows_for_point(double axis_value, const Scenario& sc, const Rates& rates) {
    std::vector<SweepRow> rows;
    auto make = [&](std::string id, const Tally& t) {
        SweepRow row{axis_value, std::move(id), t, rates.trials, wilson_interval(t.missed, t.sent), to_string(sc.mode),
                     sc.binning.bins};
        rows.push_back(std::move(row));
    };
    for (std::size_t c = 0; c < rates.per_class.size(); ++c) {
        make(std::to_string(c), rates.per_class[c]);
    }
    make("all", rates.all);
    return rows;
}

inline SweepResult sweep(const Scenario& scenario, SweepAxis axis, std::span<const double> points, std::size_t trials,
                         std::uint64_t master, unsigned workers) {
    SweepResult result;
    std::optional<AccessSystem> fixed;
    for (double point : points) {
        Scenario sc = scenario;
        double ebno = scenario.ebno_db;
        if (axis == SweepAxis::ebno) {
            ebno = point;
        } else {
            if (point < 0.0 || point != std::floor(point)) {
                throw ConfigError("K sweep points must be nonnegative integers");
            }
            sc = with_active_users(scenario, static_cast<std::size_t>(point));
        }
        if (axis == SweepAxis::ebno && fixed) {
            fixed->set_ebno(ebno);
        } else {
            fixed.emplace(sc, ebno);
        }
        const auto outcomes = run_trials(*fixed, trials, master, workers);
        const auto rates = aggregate(outcomes);
        for (auto& row : rows_for_point(point, sc, rates)) {
            result.rows.push_back(std::move(row));
        }
    }
    return result;
}

inline std::string format_number(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

inline void write_csv(std::ostream& out, const SweepResult& result) {
    out << "axis_value,group_id,pupe,md,fa,trials,ci_lo,ci_hi,mode,G\n";
    for (const auto& r : result.rows) {
        out << format_number(r.axis_value) << ',' << r.group_id << ',' << format_number(r.tally.pupe()) << ','
            << format_number(r.tally.md()) << ',' << format_number(r.tally.fa()) << ',' << r.trials << ','
            << format_number(r.ci.lo) << ',' << format_number(r.ci.hi) << ',' << r.mode << ',' << r.bins << '\n';
    }
}

struct PointEstimate {
    double pupe = 0.0;
    Interval ci;
};

struct ThresholdResult {
    double estimate = 0.0;
    double lo = 0.0;  // PUPE above target here
    double hi = 0.0;  // PUPE below target here
    std::size_t evaluations = 0;
    bool resolved = true;  // every bisection decision had a CI clear of the target
};

/// Bisection for the Eb/N0 where a non-increasing PUPE curve crosses `target`.
/// A step whose CI straddles the target falls back to the point estimate and
/// marks the result unresolved.
template <typename Evaluator>
ThresholdResult find_threshold(Evaluator&& evaluate, double target, double lo, double hi, double tolerance_db) {
    if (!(lo < hi) || !(tolerance_db > 0.0)) {
        throw PreconditionViolation("threshold search needs lo < hi and a positive tolerance");
    }
    ThresholdResult res;
    res.lo = lo;
    res.hi = hi;
    while (res.hi - res.lo > tolerance_db) {
        const double mid = 0.5 * (res.lo + res.hi);
        const PointEstimate p = evaluate(mid);
        ++res.evaluations;
        bool above;
        if (p.ci.lo > target) {
            above = true;
        } else if (p.ci.hi < target) {
            above = false;
        } else {
            res.resolved = false;
            above = p.pupe > target;
        }
        (above ? res.lo : res.hi) = mid;
    }
    res.estimate = 0.5 * (res.lo + res.hi);
    return res;
}

/// Monte-Carlo PUPE at one Eb/N0 for a fixed system.
inline PointEstimate estimate_pupe(AccessSystem& system, double ebno_db, std::size_t trials, std::uint64_t master,
                                   unsigned workers) {
    system.set_ebno(ebno_db);
    const auto rates = aggregate(run_trials(system, trials, master, workers));
    return {rates.all.pupe(), wilson_interval(rates.all.missed, rates.all.sent)};
}

}  // namespace codemix
