#pragma once

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "codemix/access.hpp"
#include "codemix/error.hpp"

namespace codemix {

inline std::string to_string(ReceiverMode mode) {
    switch (mode) {
    case ReceiverMode::coded_demixing:
        return "coded_demixing";
    case ReceiverMode::tin:
        return "tin";
    case ReceiverMode::sic:
        return "sic";
    }
    return "?";
}

inline ReceiverMode receiver_mode_from_string(const std::string& s) {
    if (s == "coded_demixing") {
        return ReceiverMode::coded_demixing;
    }
    if (s == "tin") {
        return ReceiverMode::tin;
    }
    if (s == "sic") {
        return ReceiverMode::sic;
    }
    throw ConfigError("unknown receiver mode '" + s + "'");
}

inline std::string to_string(OccupancyMethod m) {
    switch (m) {
    case OccupancyMethod::lmmse:
        return "lmmse";
    case OccupancyMethod::round:
        return "round";
    case OccupancyMethod::oracle:
        return "oracle";
    }
    return "?";
}

inline OccupancyMethod occupancy_method_from_string(const std::string& s) {
    if (s == "lmmse") {
        return OccupancyMethod::lmmse;
    }
    if (s == "round") {
        return OccupancyMethod::round;
    }
    if (s == "oracle") {
        return OccupancyMethod::oracle;
    }
    throw ConfigError("unknown occupancy estimator '" + s + "'");
}

inline nlohmann::json to_json(const Scenario& s) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& c : s.classes) {
        groups.push_back({{"L", c.sections},
                          {"v", c.section_bits},
                          {"rate", c.rate.str()},
                          {"K", c.active_users},
                          {"sensing", to_string(c.kind)},
                          {"sensing_seed", c.sensing_seed},
                          {"graph_seed", c.graph_seed},
                          {"random_coefficients", c.random_coefficients}});
    }
    return {{"n", s.channel_uses},
            {"groups", groups},
            {"binning",
             {{"G", s.binning.bins},
              {"binid_power_fraction", s.binning.binid_power_fraction},
              {"estimator", to_string(s.binning.estimator)},
              {"known_K", s.binning.known_total}}},
            {"mode", to_string(s.mode)},
            {"sic_outer", s.sic_outer},
            {"ebno_db", s.ebno_db},
            {"trials", s.trials},
            {"seed", s.seed},
            {"amp",
             {{"T", s.amp.iterations},
              {"delta", s.amp.delta},
              {"bp_rounds", s.amp.bp_rounds},
              {"use_bp", s.amp.use_bp},
              {"early_stop", s.amp.early_stop}}}};
}

/// Parses a scenario; missing keys keep their defaults, unknown keys are rejected.
inline Scenario scenario_from_json(const nlohmann::json& j) {
    auto reject_unknown = [](const nlohmann::json& obj, std::initializer_list<const char*> keys, const char* where) {
        if (!obj.is_object()) {
            throw ConfigError(std::string(where) + " must be an object");
        }
        for (const auto& [k, _] : obj.items()) {
            bool ok = false;
            for (const char* key : keys) {
                ok = ok || k == key;
            }
            if (!ok) {
                throw ConfigError("unknown key '" + k + "' in " + where);
            }
        }
    };
    try {
        reject_unknown(j, {"n", "groups", "binning", "mode", "sic_outer", "ebno_db", "trials", "seed", "amp"}, "scenario");
        Scenario s;
        s.channel_uses = j.value("n", s.channel_uses);
        if (j.contains("groups")) {
            s.classes.clear();
            for (const auto& g : j.at("groups")) {
                reject_unknown(g, {"L", "v", "rate", "K", "sensing", "sensing_seed", "graph_seed", "random_coefficients"},
                               "group");
                ClassConfig c;
                c.sections = g.value("L", c.sections);
                c.section_bits = g.value("v", c.section_bits);
                if (g.contains("rate")) {
                    c.rate = Rational::parse(g.at("rate").get<std::string>());
                }
                c.active_users = g.value("K", c.active_users);
                if (g.contains("sensing")) {
                    c.kind = sensing_kind_from_string(g.at("sensing").get<std::string>());
                }
                c.sensing_seed = g.value("sensing_seed", c.sensing_seed);
                c.graph_seed = g.value("graph_seed", c.graph_seed);
                c.random_coefficients = g.value("random_coefficients", c.random_coefficients);
                s.classes.push_back(c);
            }
        }
        if (j.contains("binning")) {
            const auto& b = j.at("binning");
            reject_unknown(b, {"G", "binid_power_fraction", "estimator", "known_K"}, "binning");
            s.binning.bins = b.value("G", s.binning.bins);
            s.binning.binid_power_fraction = b.value("binid_power_fraction", s.binning.binid_power_fraction);
            if (b.contains("estimator")) {
                s.binning.estimator = occupancy_method_from_string(b.at("estimator").get<std::string>());
            }
            s.binning.known_total = b.value("known_K", s.binning.known_total);
        }
        if (j.contains("mode")) {
            s.mode = receiver_mode_from_string(j.at("mode").get<std::string>());
        }
        s.sic_outer = j.value("sic_outer", s.sic_outer);
        s.ebno_db = j.value("ebno_db", s.ebno_db);
        s.trials = j.value("trials", s.trials);
        s.seed = j.value("seed", s.seed);
        if (j.contains("amp")) {
            const auto& a = j.at("amp");
            reject_unknown(a, {"T", "delta", "bp_rounds", "use_bp", "early_stop"}, "amp");
            s.amp.iterations = a.value("T", s.amp.iterations);
            s.amp.delta = a.value("delta", s.amp.delta);
            s.amp.bp_rounds = a.value("bp_rounds", s.amp.bp_rounds);
            s.amp.use_bp = a.value("use_bp", s.amp.use_bp);
            s.amp.early_stop = a.value("early_stop", s.amp.early_stop);
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scenario: ") + e.what());
    }
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open scenario file " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
    return scenario_from_json(j);
}

}  // namespace codemix
