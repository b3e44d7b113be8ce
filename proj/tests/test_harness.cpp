#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "codemix/harness.hpp"
#include "codemix/scenario.hpp"

using namespace codemix;

namespace {

Scenario tiny(std::size_t k = 3, std::size_t bins = 1) {
    Scenario s;
    s.channel_uses = 1024;
    ClassConfig c;
    c.sections = 8;
    c.section_bits = 7;
    c.active_users = k;
    s.classes = {c};
    s.binning.bins = bins;
    s.ebno_db = 4.0;
    return s;
}

TrialOutcome outcome_with(std::size_t sent, std::size_t missed, std::size_t recovered, std::size_t false_alarms) {
    TrialOutcome o;
    o.per_class = {Tally{sent, missed, recovered, false_alarms}};
    return o;
}

}  // namespace

TEST(RunTrial, NoiselessSingleUserIsRecovered) {
    // 60 dB: noise is negligible next to the signal
    const AccessSystem system(tiny(1), 60.0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto o = run_trial(system, seed);
        EXPECT_EQ(o.total().missed, 0u);
        EXPECT_EQ(o.total().false_alarms, 0u);
    }
}

TEST(RunTrial, SameSeedSameOutcome) {
    const AccessSystem system(tiny(4, 2), 3.0);
    const auto a = run_trial(system, 42);
    const auto b = run_trial(system, 42);
    ASSERT_EQ(a.sent.size(), b.sent.size());
    for (std::size_t i = 0; i < a.sent.size(); ++i) {
        EXPECT_EQ(a.sent[i].message, b.sent[i].message);
    }
    ASSERT_EQ(a.recovered.size(), b.recovered.size());
    for (std::size_t i = 0; i < a.recovered.size(); ++i) {
        EXPECT_EQ(a.recovered.entries[i].message, b.recovered.entries[i].message);
        EXPECT_EQ(a.recovered.entries[i].score, b.recovered.entries[i].score);
    }
    EXPECT_EQ(a.tau_trace, b.tau_trace);
}

TEST(RunTrial, MissedPlusRecoveredEqualsSent) {
    const AccessSystem system(tiny(5), 1.0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto o = run_trial(system, seed);
        std::size_t correct = 0;
        for (const auto& m : o.sent) {
            correct += o.recovered.contains(m.group, m.message) ? 1 : 0;
        }
        EXPECT_EQ(o.total().missed + correct, o.total().sent);
        EXPECT_EQ(o.total().sent, 5u);
        EXPECT_LE(o.recovered.size(), 5u);
    }
}

TEST(Metrics, PupeCounts) {
    const std::vector<TrialOutcome> all_ok = {outcome_with(4, 0, 4, 0), outcome_with(4, 0, 4, 0)};
    EXPECT_EQ(compute_pupe(all_ok).overall, 0.0);
    const std::vector<TrialOutcome> none = {outcome_with(4, 4, 0, 0)};
    EXPECT_EQ(compute_pupe(none).overall, 1.0);
    const std::vector<TrialOutcome> mixed = {outcome_with(4, 1, 4, 1), outcome_with(6, 2, 5, 1)};
    EXPECT_DOUBLE_EQ(compute_pupe(mixed).overall, 3.0 / 10.0);
    ASSERT_EQ(compute_pupe(mixed).per_class.size(), 1u);
}

TEST(Metrics, MissedDetectionAndFalseAlarm) {
    const std::vector<TrialOutcome> empty = {outcome_with(5, 5, 0, 0)};
    const auto [md0, fa0] = compute_md_fa(empty);
    EXPECT_EQ(md0, 1.0);
    EXPECT_EQ(fa0, 0.0);
    const std::vector<TrialOutcome> one_spurious = {outcome_with(5, 1, 5, 1)};
    const auto [md1, fa1] = compute_md_fa(one_spurious);
    EXPECT_DOUBLE_EQ(md1, 0.2);
    EXPECT_DOUBLE_EQ(fa1, 0.2);
}

TEST(Metrics, FalseAlarmBoundedByMissWhenListTruncatedToK) {
    const AccessSystem system(tiny(6), 0.5);
    const auto outcomes = run_trials(system, 8, 3, 1);
    const auto [md, fa] = compute_md_fa(outcomes);
    EXPECT_LE(fa, md + 1e-12);
}

TEST(Metrics, WilsonInterval) {
    const auto ci = wilson_interval(10, 100);
    EXPECT_LT(ci.lo, 0.1);
    EXPECT_GT(ci.hi, 0.1);
    EXPECT_NEAR(ci.lo, 0.0552, 5e-4);
    EXPECT_NEAR(ci.hi, 0.1744, 5e-4);
    EXPECT_EQ(wilson_interval(0, 50).lo, 0.0);
    EXPECT_GT(wilson_interval(0, 50).hi, 0.0);
    EXPECT_EQ(wilson_interval(50, 50).hi, 1.0);
    const auto none = wilson_interval(0, 0);
    EXPECT_EQ(none.lo, 0.0);
    EXPECT_EQ(none.hi, 1.0);
}

TEST(Threshold, BisectionOnKnownCurve) {
    // PUPE = exp(-(x - 1)); crosses 0.05 at 1 + ln 20
    auto curve = [](double x) {
        const double p = std::min(1.0, std::exp(-(x - 1.0)));
        return PointEstimate{p, {std::max(0.0, p - 1e-3), std::min(1.0, p + 1e-3)}};
    };
    const auto res = find_threshold(curve, 0.05, 0.0, 8.0, 0.01);
    EXPECT_NEAR(res.estimate, 1.0 + std::log(20.0), 0.01);
    EXPECT_LE(res.hi - res.lo, 0.01);
    EXPECT_GT(res.evaluations, 5u);
    EXPECT_THROW((void)find_threshold(curve, 0.05, 2.0, 1.0, 0.1), PreconditionViolation);
}

TEST(Threshold, StraddlingIntervalIsFlagged) {
    auto curve = [](double x) { return PointEstimate{x < 3.0 ? 0.2 : 0.0, {0.0, 1.0}}; };
    const auto res = find_threshold(curve, 0.05, 0.0, 8.0, 0.1);
    EXPECT_FALSE(res.resolved);
    EXPECT_NEAR(res.estimate, 3.0, 0.1);
}

TEST(Sweep, CsvSchemaAndWorkerInvariance) {
    const auto sc = tiny(3, 2);
    const std::vector<double> points = {2.0, 5.0};
    std::ostringstream one, three;
    write_csv(one, sweep(sc, SweepAxis::ebno, points, 6, 11, 1));
    write_csv(three, sweep(sc, SweepAxis::ebno, points, 6, 11, 3));
    EXPECT_EQ(one.str(), three.str());
    std::istringstream lines(one.str());
    std::string header;
    std::getline(lines, header);
    EXPECT_EQ(header, "axis_value,group_id,pupe,md,fa,trials,ci_lo,ci_hi,mode,G");
    std::string row;
    std::size_t count = 0;
    while (std::getline(lines, row)) {
        ++count;
        EXPECT_EQ(std::count(row.begin(), row.end(), ','), 9);
    }
    EXPECT_EQ(count, 4u);
}

TEST(Sweep, ActiveUserAxis) {
    const std::vector<double> points = {1.0, 2.0};
    const auto res = sweep(tiny(3), SweepAxis::k, points, 2, 1, 1);
    ASSERT_EQ(res.rows.size(), 4u);
    EXPECT_EQ(res.rows[0].tally.sent, 2u);
    EXPECT_EQ(res.rows[2].tally.sent, 4u);
    const std::vector<double> bad = {1.5};
    EXPECT_THROW((void)sweep(tiny(3), SweepAxis::k, bad, 1, 1, 1), ConfigError);
    EXPECT_THROW((void)sweep_axis_from_string("snr"), ConfigError);
}

TEST(ParallelMap, ResultsByIndexAndErrorsPropagate) {
    const auto r = parallel_map<std::size_t>(100, 4, [](std::size_t i) { return i * i; });
    for (std::size_t i = 0; i < r.size(); ++i) {
        EXPECT_EQ(r[i], i * i);
    }
    EXPECT_THROW((void)parallel_map<int>(10, 3,
                                         [](std::size_t i) -> int {
                                             if (i == 7) {
                                                 throw ConfigError("boom");
                                             }
                                             return 0;
                                         }),
                 ConfigError);
}

TEST(ScenarioJson, ParseRoundTripAndReject) {
    const auto j = nlohmann::json::parse(R"({
        "n": 4096,
        "groups": [{"L": 16, "v": 10, "rate": "3/8", "K": 12, "sensing": "gaussian", "sensing_seed": 4}],
        "binning": {"G": 4, "binid_power_fraction": 0.003, "estimator": "round", "known_K": false},
        "mode": "coded_demixing",
        "sic_outer": true,
        "ebno_db": 3.5,
        "trials": 20,
        "seed": 9,
        "amp": {"T": 12, "delta": 6, "bp_rounds": 8}
    })");
    const auto s = scenario_from_json(j);
    EXPECT_EQ(s.channel_uses, 4096u);
    ASSERT_EQ(s.classes.size(), 1u);
    EXPECT_EQ(s.classes[0].rate.num, 3);
    EXPECT_EQ(s.classes[0].rate.den, 8);
    EXPECT_EQ(s.classes[0].kind, SensingKind::gaussian);
    EXPECT_EQ(s.classes[0].message_bits(), 60u);
    EXPECT_EQ(s.binning.bins, 4u);
    EXPECT_EQ(s.binning.estimator, OccupancyMethod::round);
    EXPECT_FALSE(s.binning.known_total);
    EXPECT_TRUE(s.sic_outer);
    EXPECT_EQ(s.amp.iterations, 12u);
    EXPECT_EQ(s.amp.delta, 6u);
    const auto back = scenario_from_json(to_json(s));
    EXPECT_EQ(to_json(back), to_json(s));

    auto bad = j;
    bad["groups"][0]["Lx"] = 3;
    EXPECT_THROW((void)scenario_from_json(bad), ConfigError);
    bad = j;
    bad["mode"] = "joint";
    EXPECT_THROW((void)scenario_from_json(bad), ConfigError);
    bad = j;
    bad["extra"] = 1;
    EXPECT_THROW((void)scenario_from_json(bad), ConfigError);
    EXPECT_THROW((void)load_scenario("/nonexistent/scenario.json"), ConfigError);
}
