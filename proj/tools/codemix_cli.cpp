#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "codemix/codemix.hpp"

using namespace codemix;

namespace {

unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

nlohmann::json summarize(const TrialOutcome& o) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& t : o.per_class) {
        classes.push_back({{"sent", t.sent}, {"missed", t.missed}, {"recovered", t.recovered},
                           {"false_alarms", t.false_alarms}});
    }
    return {{"event", "trial"},
            {"per_class", classes},
            {"recovered", to_json(o.recovered)},
            {"occupancy", o.occupancy.per_bin},
            {"occupancy_total", o.occupancy.total},
            {"tau", o.tau_trace},
            {"diverged", o.diverged},
            {"degenerate_beliefs", o.degenerate_beliefs},
            {"resampled_duplicates", o.resampled_duplicates}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coded demixing for unsourced random access: simulation front end"};
    app.require_subcommand(1);

    std::string config;
    std::string axis = "ebno";
    std::vector<double> points;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out_path = "-";
    unsigned workers = default_workers();

    auto* sim = app.add_subcommand("simulate", "sweep Eb/N0 or K and write a CSV");
    sim->add_option("--config", config, "scenario JSON")->required()->check(CLI::ExistingFile);
    sim->add_option("--axis", axis, "sweep axis")->check(CLI::IsMember({"ebno", "k"}));
    sim->add_option("--points", points, "axis values")->required();
    sim->add_option("--trials", trials, "trials per point (default: scenario)");
    sim->add_option("--seed", seed, "master seed (default: scenario)");
    sim->add_option("--out", out_path, "CSV path, - for stdout");
    sim->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

    double target = 0.05;
    double lo = 0.0;
    double hi = 4.0;
    double tol = 0.05;
    auto* thr = app.add_subcommand("threshold", "bisection for the Eb/N0 that reaches a target PUPE");
    thr->add_option("--config", config, "scenario JSON")->required()->check(CLI::ExistingFile);
    thr->add_option("--target", target, "target PUPE")->check(CLI::Range(0.0, 1.0));
    thr->add_option("--lo", lo, "lower Eb/N0 bracket (dB)");
    thr->add_option("--hi", hi, "upper Eb/N0 bracket (dB)");
    thr->add_option("--tol", tol, "bracket width to stop at (dB)");
    thr->add_option("--trials", trials, "trials per evaluation (default: scenario)");
    thr->add_option("--seed", seed, "master seed (default: scenario)");
    thr->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

    bool verbose = false;
    auto* one = app.add_subcommand("trial", "run a single trial and print JSON lines");
    one->add_option("--config", config, "scenario JSON")->required()->check(CLI::ExistingFile);
    one->add_option("--seed", seed, "trial seed (default: scenario)");
    one->add_flag("--verbose", verbose, "emit per-iteration diagnostics");

    auto* graph = app.add_subcommand("graph", "print the outer factor graph of every group as JSON");
    graph->add_option("--config", config, "scenario JSON")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        const Scenario scenario = load_scenario(config);
        seed_given = app.get_subcommands().front()->count("--seed") > 0;
        const std::uint64_t master = seed_given ? seed : scenario.seed;
        const std::size_t n_trials = trials > 0 ? trials : scenario.trials;

        if (*sim) {
            const auto result = sweep(scenario, sweep_axis_from_string(axis), points, n_trials, master, workers);
            if (out_path == "-") {
                write_csv(std::cout, result);
            } else {
                std::ofstream out(out_path);
                if (!out) {
                    throw ConfigError("cannot write " + out_path);
                }
                write_csv(out, result);
            }
        } else if (*thr) {
            AccessSystem system(scenario, scenario.ebno_db);
            auto eval = [&](double ebno) {
                const auto p = estimate_pupe(system, ebno, n_trials, master, workers);
                std::cerr << "ebno " << ebno << " pupe " << p.pupe << " ci [" << p.ci.lo << ", " << p.ci.hi << "]\n";
                return p;
            };
            const auto res = find_threshold(eval, target, lo, hi, tol);
            std::cout << nlohmann::json{{"target", target},        {"estimate", res.estimate},
                                        {"lo", res.lo},            {"hi", res.hi},
                                        {"evaluations", res.evaluations}, {"resolved", res.resolved},
                                        {"trials", n_trials}}
                             .dump()
                      << '\n';
        } else if (*one) {
            const AccessSystem system(scenario, scenario.ebno_db);
            TraceSink sink;
            if (verbose) {
                sink = [](const nlohmann::json& j) { std::cout << j.dump() << '\n'; };
            }
            std::cout << summarize(run_trial(system, master, sink)).dump() << '\n';
        } else if (*graph) {
            const AccessSystem system(scenario, scenario.ebno_db);
            for (const auto& g : system.groups()) {
                std::cout << nlohmann::json{{"group", g.id}, {"graph", graph_to_json(*g.graph)}}.dump() << '\n';
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
