#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "codemix/bits.hpp"
#include "codemix/bp.hpp"
#include "codemix/factor_graph.hpp"
#include "codemix/sectioned_vector.hpp"

namespace codemix {

struct ExtractionConfig {
    std::size_t delta = 10;
    unsigned bp_rounds = 10;
    // stop the per-root BP as soon as the hard decision is parity consistent
    bool early_stop = true;
};

struct Candidate {
    Codeword codeword;
    double score = 0.0;  // sum over sections of log(normalized belief at the chosen index)
};

struct ExtractionStats {
    std::size_t roots = 0;
    std::size_t inconsistent = 0;
    std::size_t duplicates = 0;
};

namespace detail {

inline bool hard_decision(const BpEngine& engine, std::span<const double> locals, std::size_t n,
                          std::vector<double>& post, Codeword& word, double* score) {
    const auto& graph = engine.graph();
    double total = 0.0;
    for (std::size_t s = 0; s < graph.num_sections(); ++s) {
        engine.posterior(s, locals.subspan(s * n, n), post);
        const auto best = std::max_element(post.begin(), post.end());
        word[s] = static_cast<std::uint32_t>(best - post.begin());
        total += std::log(*best);
    }
    if (score != nullptr) {
        *score = total;
    }
    return satisfies_checks(graph, word);
}

}  // namespace detail

/// Root-initialized codeword extraction for one group: the K + delta largest entries of
/// the first section each seed a BP run (root fixed to the basis vector, other sections
/// from the AMP state); parity-consistent hard decisions are kept, duplicates merged.
inline std::vector<Candidate> extract_group(const SectionedVector& state, const FactorGraph& graph,
                                            std::size_t active, const ExtractionConfig& cfg,
                                            ExtractionStats* stats = nullptr) {
    if (state.sections() != graph.num_sections() || state.section_bits() != graph.section_bits()) {
        throw DimensionMismatch("AMP state shape does not match the outer graph");
    }
    const std::size_t n = graph.section_size();
    const std::size_t wanted = std::min(active + cfg.delta, n);
    std::vector<Candidate> found;
    if (wanted == 0) {
        return found;
    }
    const auto root = state.section(0);
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(wanted), order.end(),
                      [&](std::uint32_t a, std::uint32_t b) { return root[a] > root[b] || (root[a] == root[b] && a < b); });

    BpEngine engine(graph);
    std::vector<double> locals(state.flat().begin(), state.flat().end());
    std::vector<double> post(n);
    Codeword word(graph.num_sections());
    std::map<Codeword, double> best;
    ExtractionStats local_stats;

    for (std::size_t c = 0; c < wanted; ++c) {
        ++local_stats.roots;
        std::fill(locals.begin(), locals.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
        locals[order[c]] = 1.0;
        engine.run(locals, 0);
        for (unsigned round = 0; round < cfg.bp_rounds; ++round) {
            engine.step(locals);
            if (cfg.early_stop && round + 1 < cfg.bp_rounds &&
                detail::hard_decision(engine, locals, n, post, word, nullptr)) {
                break;
            }
        }
        double score = 0.0;
        if (!detail::hard_decision(engine, locals, n, post, word, &score)) {
            ++local_stats.inconsistent;
            continue;
        }
        auto [it, inserted] = best.try_emplace(word, score);
        if (!inserted) {
            ++local_stats.duplicates;
            it->second = std::max(it->second, score);
        }
    }
    for (auto& [w, s] : best) {
        found.push_back({w, s});
    }
    std::stable_sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    if (stats != nullptr) {
        stats->roots += local_stats.roots;
        stats->inconsistent += local_stats.inconsistent;
        stats->duplicates += local_stats.duplicates;
    }
    return found;
}

struct DecodedEntry {
    Bits message;
    std::size_t group = 0;
    int bin = -1;  // bin index for stochastic binning, -1 otherwise
    double score = 0.0;
};

struct DecodedList {
    std::vector<DecodedEntry> entries;

    [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }
    [[nodiscard]] bool contains(std::size_t group, const Bits& message) const {
        return std::any_of(entries.begin(), entries.end(),
                           [&](const DecodedEntry& e) { return e.group == group && e.message == message; });
    }
};

struct GroupCandidates {
    std::size_t group = 0;
    int bin = -1;
    const FactorGraph* graph = nullptr;
    std::vector<Candidate> candidates;
};

/// Decreasing score; ties broken by group id, then lexicographic message.
inline bool decoded_before(const DecodedEntry& a, const DecodedEntry& b) {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    if (a.group != b.group) {
        return a.group < b.group;
    }
    return a.message < b.message;
}

/// Sorts entries, drops repeated (group, message) pairs and keeps the best `limit`.
inline void sort_and_truncate(DecodedList& list, std::size_t limit) {
    std::sort(list.entries.begin(), list.entries.end(), decoded_before);
    std::vector<DecodedEntry> kept;
    for (auto& e : list.entries) {
        if (kept.size() >= limit) {
            break;
        }
        const bool dup = std::any_of(kept.begin(), kept.end(),
                                     [&](const DecodedEntry& k) { return k.group == e.group && k.message == e.message; });
        if (!dup) {
            kept.push_back(std::move(e));
        }
    }
    list.entries = std::move(kept);
}

/// Global merge of per-group candidate lists, truncated to the best `limit` messages.
inline DecodedList merge_and_truncate(std::span<const GroupCandidates> lists, std::size_t limit) {
    DecodedList out;
    for (const auto& list : lists) {
        for (const auto& c : list.candidates) {
            out.entries.push_back({message_from_codeword(*list.graph, c.codeword), list.group, list.bin, c.score});
        }
    }
    sort_and_truncate(out, limit);
    return out;
}

inline nlohmann::json to_json(const DecodedList& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : list.entries) {
        arr.push_back({{"message", bits_to_string(e.message)}, {"group", e.group}, {"bin", e.bin}, {"score", e.score}});
    }
    return arr;
}

inline DecodedList decoded_list_from_json(const nlohmann::json& j) {
    DecodedList list;
    for (const auto& e : j) {
        list.entries.push_back({bits_from_string(e.at("message").get<std::string>()), e.at("group").get<std::size_t>(),
                                e.at("bin").get<int>(), e.at("score").get<double>()});
    }
    return list;
}

}  // namespace codemix
