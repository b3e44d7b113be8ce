// Acceptance suite: one PASS/FAIL/SKIPPED line per criterion.
//   acceptance                    all criteria except the long paper-scale run
//   acceptance --criterion N      a single criterion (exit 0 pass, 1 fail, 77 skipped)
//   acceptance --long             also run the paper-scale threshold reproduction

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "codemix/codemix.hpp"
#include "oracles.hpp"

using namespace codemix;

namespace {

// Tolerances and statistical settings.
constexpr double kCheckMessageTol = 1e-12;
constexpr int kCheckMessageDraws = 100;
constexpr double kDerivativeTol = 1e-5;
constexpr int kDerivativeDraws = 10000;
constexpr double kDivergenceTol = 1e-4;
constexpr int kDivergenceStates = 20;
constexpr double kAdjointTol = 1e-10;
constexpr double kHadamardExactTol = 1e-9;
constexpr int kRoundTripSeeds = 100;
constexpr std::size_t kBinningTrials = 2000;
constexpr double kBinningEbno = 5.0;
constexpr std::size_t kClassTrials = 1000;
constexpr double kClassEbno = 6.0;
constexpr std::size_t kUnknownKTrials = 1000;
constexpr double kUnknownKEbno = 5.0;
constexpr double kUnknownKPenalty = 0.02;
constexpr double kThresholdTarget = 0.05;
constexpr double kThresholdTol = 0.25;
constexpr std::size_t kThresholdTrials = 200;

enum class Status { pass, fail, skipped };

struct Verdict {
    Status status = Status::fail;
    std::string detail;
};

struct Settings {
    unsigned workers = 1;
    std::size_t trials = 0;  // overrides the statistical trial counts when nonzero
    bool long_run = false;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::size_t trials_or(const Settings& s, std::size_t fallback) { return s.trials > 0 ? s.trials : fallback; }

std::string ci_text(const Tally& t) {
    const auto ci = wilson_interval(t.missed, t.sent);
    return fmt("%.4f [%.4f, %.4f]", t.pupe(), ci.lo, ci.hi);
}

bool strictly_below(const Tally& a, const Tally& b) {
    return wilson_interval(a.missed, a.sent).hi < wilson_interval(b.missed, b.sent).lo;
}

Scenario desk_single(std::size_t bins) {
    Scenario s;
    s.channel_uses = 8192;
    ClassConfig c;
    c.sections = 16;
    c.section_bits = 12;
    c.rate = {1, 2};
    c.active_users = 40;
    s.classes = {c};
    s.binning.bins = bins;
    return s;
}

Scenario desk_two_class(ReceiverMode mode) {
    Scenario s;
    s.channel_uses = 8192;
    ClassConfig a;
    a.sections = 16;
    a.section_bits = 12;
    a.rate = {1, 2};
    a.active_users = 20;
    a.sensing_seed = 1;
    a.graph_seed = 1;
    ClassConfig b = a;
    b.rate = {3, 8};
    b.sensing_seed = 2;
    b.graph_seed = 2;
    s.classes = {a, b};
    s.mode = mode;
    return s;
}

Verdict check_messages() {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int draw = 0; draw < kCheckMessageDraws; ++draw) {
        const unsigned v = 1 + static_cast<unsigned>(rng() % 4);
        const auto field = GaloisField::get(v);
        const std::size_t degree = 2 + rng() % 3;
        CheckNode check;
        std::vector<SectionPmf> incoming;
        for (std::size_t j = 0; j < degree; ++j) {
            check.sections.push_back(j);
            check.coefficients.push_back(1 + static_cast<std::uint32_t>(rng() % field->order()));
            incoming.push_back(oracle::random_pmf(field->size(), rng));
        }
        for (std::size_t t = 0; t < degree; ++t) {
            const auto fast = check_to_variable(check, incoming, t, *field);
            const auto slow = oracle::check_message(check, incoming, t, v);
            for (std::size_t k = 0; k < slow.size(); ++k) {
                worst = std::max(worst, std::abs(fast[k] - slow[k]));
            }
        }
    }
    return {worst <= kCheckMessageTol ? Status::pass : Status::fail,
            fmt("transform-domain check messages vs enumeration, %d draws, v<=4: max abs err %.3g (tol %.0e)",
                kCheckMessageDraws, worst, kCheckMessageTol)};
}

Verdict derivative() {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    for (int i = 0; i < kDerivativeDraws; ++i) {
        const double q = 0.001 + 0.998 * u(rng);
        const double d = 0.1 + 3.9 * u(rng);
        const double tau = 0.2 + 1.8 * u(rng);
        const double r = (u(rng) < 0.5 ? d : 0.0) + tau * nd(rng);
        const double fd = oracle::pme_central_difference(q, r, d, tau, 1e-6 * tau);
        const double exact = pme_derivative(q, r, d, tau);
        worst = std::max(worst, std::abs(fd - exact) / std::abs(exact));
    }
    return {worst <= kDerivativeTol ? Status::pass : Status::fail,
            fmt("posterior-mean derivative vs central differences, %d draws: max rel err %.3g (tol %.0e)",
                kDerivativeDraws, worst, kDerivativeTol)};
}

Verdict divergence() {
    const FactorGraph graphs[2] = {build_graph(3, 3, {2, 3}, 1), build_graph(3, 3, {2, 3}, 2)};
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    for (int state = 0; state < kDivergenceStates; ++state) {
        const double amps[2] = {0.6 + u(rng), 0.6 + u(rng)};
        const double tau = 0.5 + u(rng);
        const std::size_t active = 1 + rng() % 3;
        std::vector<SectionedVector> r(2, SectionedVector(3, 3));
        for (int g = 0; g < 2; ++g) {
            for (std::size_t user = 0; user < active; ++user) {
                const auto word = encode(graphs[g], random_bits(graphs[g].message_bits(), rng));
                for (std::size_t s = 0; s < 3; ++s) {
                    r[g].at(s, word[s]) += amps[g];
                }
            }
            for (auto& x : r[g].flat()) {
                x += tau * nd(rng);
            }
        }
        std::vector<SectionedVector> eta(2);
        double fd = 0.0;
        for (int g = 0; g < 2; ++g) {
            GroupDenoiser ws(graphs[g]);
            SectionedVector priors;
            dynamic_denoise(ws, r[g], amps[g], active, tau, {}, eta[g], priors);
            const double h = 1e-5 * tau;
            for (std::size_t i = 0; i < r[g].size(); ++i) {
                auto plus = r[g];
                auto minus = r[g];
                plus.flat()[i] += h;
                minus.flat()[i] -= h;
                SectionedVector sp, sm;
                dynamic_denoise(ws, plus, amps[g], active, tau, {}, sp, priors);
                dynamic_denoise(ws, minus, amps[g], active, tau, {}, sm, priors);
                fd += amps[g] * (sp.flat()[i] - sm.flat()[i]) / (2 * h);
            }
        }
        const double closed = onsager_divergence(eta, amps, tau);
        worst = std::max(worst, std::abs(fd - closed) / std::abs(closed));
    }
    return {worst <= kDivergenceTol ? Status::pass : Status::fail,
            fmt("closed-form Onsager divergence vs finite differences of the dynamic denoiser (2 groups, L=3, v=3, "
                "%d states): max rel err %.3g (tol %.0e)",
                kDivergenceStates, worst, kDivergenceTol)};
}

Verdict operators() {
    std::mt19937_64 rng(404);
    std::normal_distribution<double> nd;
    double adjoint_worst = 0.0;
    const std::vector<OperatorSpec> shapes = {
        {SensingKind::hadamard, 38400, 16, 2, 1}, {SensingKind::hadamard, 8192, 12, 4, 2},
        {SensingKind::hadamard, 100, 4, 3, 3},    {SensingKind::hadamard, 255, 8, 2, 4},
        {SensingKind::gaussian, 300, 6, 3, 5},    {SensingKind::gaussian, 64, 8, 2, 6},
    };
    for (const auto& spec : shapes) {
        const auto op = make_operator(spec);
        for (int rep = 0; rep < 5; ++rep) {
            SectionedVector m(spec.sections, spec.section_bits);
            for (auto& x : m.flat()) {
                x = nd(rng);
            }
            std::vector<double> z(spec.rows);
            for (auto& x : z) {
                x = nd(rng);
            }
            const auto am = op->forward(m);
            const auto atz = op->adjoint(z);
            const double lhs = oracle::dot(am, z);
            const double rhs = oracle::dot(m.flat(), atz.flat());
            const double scale = std::sqrt(oracle::dot(am, am) * oracle::dot(z, z));
            adjoint_worst = std::max(adjoint_worst, std::abs(lhs - rhs) / scale);
        }
    }
    double fast_worst = 0.0;
    double adj_dense_worst = 0.0;
    for (unsigned v = 1; v <= 8; ++v) {
        const std::size_t size = std::size_t{1} << v;
        for (std::size_t n : {std::max<std::size_t>(1, size - 1), size / 2 + 1, 2 * size + 3}) {
            const HadamardOperator op({SensingKind::hadamard, n, v, 3, 500 + v * 7 + n});
            SectionedVector m(3, v);
            std::uniform_int_distribution<int> small(-3, 3);
            for (auto& x : m.flat()) {
                x = small(rng);
            }
            const auto fast = op.forward(m);
            const auto slow = oracle::hadamard_forward_unscaled(op, m);
            const double root = std::sqrt(static_cast<double>(n));
            for (std::size_t i = 0; i < n; ++i) {
                fast_worst = std::max(fast_worst, std::abs(fast[i] * root - slow[i]));
            }
            std::vector<double> z(n);
            for (auto& x : z) {
                x = nd(rng);
            }
            const auto adj = op.adjoint(z);
            const auto adj_slow = oracle::hadamard_adjoint(op, z);
            for (std::size_t i = 0; i < adj.size(); ++i) {
                adj_dense_worst = std::max(adj_dense_worst, std::abs(adj.flat()[i] - adj_slow.flat()[i]));
            }
        }
    }
    const bool ok = adjoint_worst <= kAdjointTol && fast_worst <= kHadamardExactTol && adj_dense_worst <= 1e-12;
    return {ok ? Status::pass : Status::fail,
            fmt("adjoint identity max rel err %.3g (tol %.0e); fast Hadamard vs entrywise oracle, v<=8: "
                "max |diff| of integer sums %.3g (tol %.0e), adjoint max |diff| %.3g",
                adjoint_worst, kAdjointTol, fast_worst, kHadamardExactTol, adj_dense_worst)};
}

Verdict round_trips() {
    std::size_t failures = 0;
    std::size_t runs = 0;
    for (std::size_t bins : {1u, 2u, 8u}) {
        Scenario s;
        s.channel_uses = 2048;
        ClassConfig c;
        c.sections = 8;
        c.section_bits = 8;
        c.rate = {1, 2};
        c.active_users = bins;
        s.classes = {c};
        s.binning.bins = bins;
        const AccessSystem system(s, 6.0);
        const unsigned select = s.binning.select_bits();
        for (int seed = 0; seed < kRoundTripSeeds; ++seed) {
            std::mt19937_64 rng(derive_seed(505, bins, static_cast<std::uint64_t>(seed)));
            std::vector<double> payload(s.channel_uses, 0.0);
            std::vector<double> binid(system.binning() ? bins : 0, 0.0);
            std::vector<std::size_t> counts(system.groups().size(), 0);
            std::vector<std::pair<std::size_t, Bits>> sent;
            for (std::size_t b = 0; b < bins; ++b) {
                auto msg = random_bits(c.message_bits(), rng);
                for (unsigned i = 0; i < select; ++i) {
                    msg[i] = static_cast<std::uint8_t>((b >> (select - 1 - i)) & 1u);
                }
                const auto user = encode_user(system, 0, msg);
                for (std::size_t i = 0; i < payload.size(); ++i) {
                    payload[i] += user.frame.payload[i];
                }
                for (std::size_t i = 0; i < binid.size(); ++i) {
                    binid[i] += user.frame.binid[i];
                }
                ++counts[user.group];
                sent.emplace_back(user.group, msg);
            }
            const auto out = run_receiver(system, {payload, binid, bins, counts}, ReceiverMode::coded_demixing, false);
            ++runs;
            bool ok = out.list.size() == sent.size();
            for (const auto& [g, msg] : sent) {
                ok = ok && out.list.contains(g, msg);
            }
            failures += ok ? 0 : 1;
        }
    }
    return {failures == 0 ? Status::pass : Status::fail,
            fmt("noiseless single user per group, G in {1,2,8}, v=8 L=8 n=2048: %zu/%zu runs recovered exactly",
                runs - failures, runs)};
}

Rates run_point(const Scenario& s, double ebno, std::size_t trials, const Settings& cfg) {
    const AccessSystem system(s, ebno);
    return aggregate(run_trials(system, trials, 1, cfg.workers));
}

Verdict binning_benefit(const Settings& cfg) {
    const auto trials = trials_or(cfg, kBinningTrials);
    const auto one = run_point(desk_single(1), kBinningEbno, trials, cfg).all;
    const auto two = run_point(desk_single(2), kBinningEbno, trials, cfg).all;
    const bool in_band = one.pupe() >= 0.1 && one.pupe() <= 0.3;
    const bool ok = in_band && strictly_below(two, one);
    return {ok ? Status::pass : Status::fail,
            fmt("v=12 L=16 n=8192 K=40 at %.2f dB, %zu trials: PUPE(G=1) %s, PUPE(G=2) %s; G=1 in [0.1,0.3]: %s; "
                "CIs separated: %s",
                kBinningEbno, trials, ci_text(one).c_str(), ci_text(two).c_str(), in_band ? "yes" : "no",
                strictly_below(two, one) ? "yes" : "no")};
}

Verdict class_ordering(const Settings& cfg) {
    const auto trials = trials_or(cfg, kClassTrials);
    const auto cd = run_point(desk_two_class(ReceiverMode::coded_demixing), kClassEbno, trials, cfg);
    const auto sic = run_point(desk_two_class(ReceiverMode::sic), kClassEbno, trials, cfg);
    const auto tin = run_point(desk_two_class(ReceiverMode::tin), kClassEbno, trials, cfg);
    bool ok = true;
    std::ostringstream detail;
    detail << fmt("two classes (R=1/2 and 3/8, v=12 L=16, K=20 each, n=8192) at %.2f dB, %zu trials;", kClassEbno,
                  trials);
    for (std::size_t g = 0; g < 2; ++g) {
        const bool a = strictly_below(cd.per_class[g], sic.per_class[g]);
        const bool b = strictly_below(sic.per_class[g], tin.per_class[g]);
        ok = ok && a && b;
        detail << fmt(" group %zu: demixing %s, SIC %s, TIN %s (demixing<SIC %s, SIC<TIN %s);", g + 1,
                      ci_text(cd.per_class[g]).c_str(), ci_text(sic.per_class[g]).c_str(),
                      ci_text(tin.per_class[g]).c_str(), a ? "yes" : "no", b ? "yes" : "no");
    }
    return {ok ? Status::pass : Status::fail, detail.str()};
}

Verdict paper_scale(const Settings& cfg) {
    if (!cfg.long_run) {
        return {Status::skipped, "paper-scale thresholds (n=38400, v=16, K=100) need --long"};
    }
    const auto trials = trials_or(cfg, kThresholdTrials);
    const std::pair<std::size_t, double> targets[] = {{1, 2.38}, {2, 1.79}, {8, 1.77}};
    bool ok = true;
    std::ostringstream detail;
    detail << fmt("PUPE=%.2f thresholds at K=100, %zu trials per bisection step:", kThresholdTarget, trials);
    for (const auto& [bins, expected] : targets) {
        Scenario s;
        s.classes[0].active_users = 100;
        s.binning.bins = bins;
        AccessSystem system(s, expected);
        auto eval = [&](double ebno) { return estimate_pupe(system, ebno, trials, 1, cfg.workers); };
        const auto res = find_threshold(eval, kThresholdTarget, 0.5, 4.0, 0.05);
        const bool hit = std::abs(res.estimate - expected) <= kThresholdTol;
        ok = ok && hit;
        detail << fmt(" G=%zu %.2f dB (bracket [%.2f, %.2f], expected %.2f +/- %.2f, %s%s);", bins, res.estimate,
                      res.lo, res.hi, expected, kThresholdTol, hit ? "ok" : "off",
                      res.resolved ? "" : ", CI straddled the target");
    }
    return {ok ? Status::pass : Status::fail, detail.str()};
}

Verdict unknown_k(const Settings& cfg) {
    const auto trials = trials_or(cfg, kUnknownKTrials);
    const auto known = run_point(desk_single(2), kUnknownKEbno, trials, cfg).all;
    auto s = desk_single(2);
    s.binning.known_total = false;
    s.binning.estimator = OccupancyMethod::round;
    const auto unknown = run_point(s, kUnknownKEbno, trials, cfg).all;
    const double penalty = unknown.md() - known.pupe();
    return {penalty <= kUnknownKPenalty ? Status::pass : Status::fail,
            fmt("G=2 v=12 L=16 n=8192 K=40 at %.2f dB, %zu trials: known-K PUPE %.4f, unknown-K MD %.4f FA %.4f, "
                "penalty %.4f (limit %.2f)",
                kUnknownKEbno, trials, known.pupe(), unknown.md(), unknown.fa(), penalty, kUnknownKPenalty)};
}

Verdict determinism(const Settings&) {
    Scenario s;
    s.channel_uses = 2048;
    ClassConfig c;
    c.sections = 8;
    c.section_bits = 8;
    c.active_users = 6;
    s.classes = {c};
    s.binning.bins = 2;
    const std::vector<double> points = {2.0, 4.0, 6.0};
    auto csv = [&](unsigned workers) {
        std::ostringstream out;
        write_csv(out, sweep(s, SweepAxis::ebno, points, 24, 77, workers));
        return out.str();
    };
    const auto serial = csv(1);
    const auto again = csv(1);
    const auto parallel = csv(4);
    const bool ok = serial == again && serial == parallel;
    return {ok ? Status::pass : Status::fail,
            fmt("sweep CSV (%zu bytes) identical across repeated runs and 1 vs 4 workers: %s", serial.size(),
                ok ? "yes" : "no")};
}

const char* label(Status s) {
    switch (s) {
    case Status::pass:
        return "PASS";
    case Status::fail:
        return "FAIL";
    case Status::skipped:
        return "SKIPPED";
    }
    return "?";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"codemix acceptance suite"};
    int only = 0;
    Settings cfg;
    cfg.workers = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--criterion", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
    app.add_flag("--long", cfg.long_run, "include the paper-scale threshold reproduction");
    app.add_option("--workers", cfg.workers, "worker threads for Monte-Carlo criteria")->check(CLI::PositiveNumber);
    app.add_option("--trials", cfg.trials, "override the trial count of the statistical criteria");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::function<Verdict(const Settings&)>> criteria = {
        [](const Settings&) { return check_messages(); },
        [](const Settings&) { return derivative(); },
        [](const Settings&) { return divergence(); },
        [](const Settings&) { return operators(); },
        [](const Settings&) { return round_trips(); },
        binning_benefit,
        class_ordering,
        paper_scale,
        unknown_k,
        determinism,
    };
    bool any_fail = false;
    bool all_skipped = true;
    for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) {
        if (only != 0 && n != only) {
            continue;
        }
        Verdict v;
        try {
            v = criteria[static_cast<std::size_t>(n - 1)](cfg);
        } catch (const std::exception& e) {
            v = {Status::fail, std::string("error: ") + e.what()};
        }
        std::cout << "criterion " << n << ' ' << label(v.status) << ": " << v.detail << std::endl;
        any_fail = any_fail || v.status == Status::fail;
        all_skipped = all_skipped && v.status == Status::skipped;
    }
    if (any_fail) {
        return 1;
    }
    return all_skipped ? 77 : 0;
}
