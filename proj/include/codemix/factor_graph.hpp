#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codemix/bits.hpp"
#include "codemix/error.hpp"
#include "codemix/gf2m.hpp"
#include "codemix/rng.hpp"

namespace codemix {

struct Rational {
    int num = 1;
    int den = 2;

    [[nodiscard]] double value() const noexcept { return static_cast<double>(num) / den; }
    [[nodiscard]] std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

    static Rational parse(const std::string& text) {
        const auto slash = text.find('/');
        try {
            if (slash == std::string::npos) {
                return {std::stoi(text), 1};
            }
            return {std::stoi(text.substr(0, slash)), std::stoi(text.substr(slash + 1))};
        } catch (const std::exception&) {
            throw ConfigError("cannot parse rate '" + text + "'");
        }
    }

    friend bool operator==(const Rational&, const Rational&) = default;
};

/// Parity constraint sum_j coefficients[j] * x[sections[j]] = 0 over GF(2^v).
struct CheckNode {
    std::vector<std::size_t> sections;
    std::vector<std::uint32_t> coefficients;

    [[nodiscard]] std::size_t degree() const noexcept { return sections.size(); }

    /// Position of `section` inside this check, or degree() if absent.
    [[nodiscard]] std::size_t position_of(std::size_t section) const noexcept {
        return static_cast<std::size_t>(std::find(sections.begin(), sections.end(), section) - sections.begin());
    }
};

inline constexpr unsigned kInfiniteGirth = std::numeric_limits<unsigned>::max();

/// Bipartite graph of the outer non-binary LDPC code. The first `info_sections()`
/// sections carry the message; every other section is the parity of exactly one check,
/// resolved in `encoding_order()`.
class FactorGraph {
public:
    FactorGraph(std::size_t num_sections, unsigned section_bits, Rational rate, std::uint64_t seed,
                std::vector<CheckNode> checks, std::vector<std::size_t> encoding_order)
        : num_sections_(num_sections),
          section_bits_(section_bits),
          rate_(rate),
          seed_(seed),
          checks_(std::move(checks)),
          encoding_order_(std::move(encoding_order)),
          field_(GaloisField::get(section_bits)) {
        validate_rate(num_sections_, rate_);
        info_sections_ = num_sections_ * static_cast<std::size_t>(rate_.num) / static_cast<std::size_t>(rate_.den);
        adjacency_.assign(num_sections_, {});
        for (std::size_t a = 0; a < checks_.size(); ++a) {
            auto& check = checks_[a];
            if (check.degree() < 2) {
                throw ConstructionFailure("every check needs degree >= 2");
            }
            if (check.coefficients.empty()) {
                check.coefficients.assign(check.degree(), 1);
            }
            if (check.coefficients.size() != check.degree()) {
                throw ConstructionFailure("coefficient count does not match check degree");
            }
            auto sorted = check.sections;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
                throw ConstructionFailure("check lists a section twice");
            }
            for (std::size_t j = 0; j < check.degree(); ++j) {
                if (check.sections[j] >= num_sections_) {
                    throw ConstructionFailure("check references a section out of range");
                }
                if (check.coefficients[j] == 0 || check.coefficients[j] >= field_->size()) {
                    throw ConstructionFailure("check coefficients must be nonzero field elements");
                }
                adjacency_[check.sections[j]].push_back(a);
            }
        }
        resolve_encoding_order();
        girth_ = compute_girth();
        if (girth_ < 4) {
            throw ConstructionFailure("girth below 4");
        }
    }

    [[nodiscard]] std::size_t num_sections() const noexcept { return num_sections_; }
    [[nodiscard]] unsigned section_bits() const noexcept { return section_bits_; }
    [[nodiscard]] std::size_t section_size() const noexcept { return std::size_t{1} << section_bits_; }
    [[nodiscard]] Rational rate() const noexcept { return rate_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::size_t info_sections() const noexcept { return info_sections_; }
    [[nodiscard]] std::size_t parity_sections() const noexcept { return num_sections_ - info_sections_; }
    [[nodiscard]] std::size_t message_bits() const noexcept { return info_sections_ * section_bits_; }
    [[nodiscard]] const std::vector<CheckNode>& checks() const noexcept { return checks_; }
    [[nodiscard]] const std::vector<std::size_t>& encoding_order() const noexcept { return encoding_order_; }
    [[nodiscard]] const std::vector<std::size_t>& parity_of_check() const noexcept { return parity_of_check_; }
    [[nodiscard]] const std::vector<std::vector<std::size_t>>& variable_adjacency() const noexcept { return adjacency_; }
    [[nodiscard]] unsigned girth() const noexcept { return girth_; }
    [[nodiscard]] const GaloisField& field() const noexcept { return *field_; }
    [[nodiscard]] bool unit_coefficients() const noexcept {
        return std::all_of(checks_.begin(), checks_.end(), [](const CheckNode& c) {
            return std::all_of(c.coefficients.begin(), c.coefficients.end(), [](std::uint32_t x) { return x == 1; });
        });
    }

    static void validate_rate(std::size_t num_sections, Rational rate) {
        if (rate.num <= 0 || rate.den <= 0 || rate.num >= rate.den) {
            throw PreconditionViolation("rate must lie strictly between 0 and 1");
        }
        if ((num_sections * static_cast<std::size_t>(rate.num)) % static_cast<std::size_t>(rate.den) != 0) {
            throw PreconditionViolation("L * rate must be integral");
        }
    }

private:
    void resolve_encoding_order() {
        if (encoding_order_.size() != checks_.size()) {
            throw ConstructionFailure("encoding order must be a permutation of the checks");
        }
        std::vector<bool> known(num_sections_, false);
        std::fill(known.begin(), known.begin() + static_cast<std::ptrdiff_t>(info_sections_), true);
        std::vector<bool> used(checks_.size(), false);
        parity_of_check_.assign(checks_.size(), 0);
        for (auto a : encoding_order_) {
            if (a >= checks_.size() || used[a]) {
                throw ConstructionFailure("encoding order must be a permutation of the checks");
            }
            used[a] = true;
            std::size_t unknown = 0;
            std::size_t parity = 0;
            for (auto s : checks_[a].sections) {
                if (!known[s]) {
                    ++unknown;
                    parity = s;
                }
            }
            if (unknown != 1) {
                throw ConstructionFailure("check " + std::to_string(a) +
                                          " does not have exactly one undetermined section in encoding order");
            }
            known[parity] = true;
            parity_of_check_[a] = parity;
        }
        if (!std::all_of(known.begin(), known.end(), [](bool k) { return k; })) {
            throw ConstructionFailure("encoding order leaves sections undetermined");
        }
    }

    // Shortest cycle of the bipartite graph via BFS from every node.
    [[nodiscard]] unsigned compute_girth() const {
        const std::size_t nv = num_sections_;
        const std::size_t total = nv + checks_.size();
        std::vector<std::vector<std::size_t>> nbr(total);
        for (std::size_t a = 0; a < checks_.size(); ++a) {
            for (auto s : checks_[a].sections) {
                nbr[s].push_back(nv + a);
                nbr[nv + a].push_back(s);
            }
        }
        unsigned best = kInfiniteGirth;
        std::vector<unsigned> dist(total);
        std::vector<std::size_t> parent(total);
        constexpr auto unseen = std::numeric_limits<unsigned>::max();
        for (std::size_t root = 0; root < total; ++root) {
            std::fill(dist.begin(), dist.end(), unseen);
            dist[root] = 0;
            parent[root] = total;
            std::queue<std::size_t> queue;
            queue.push(root);
            while (!queue.empty()) {
                const auto u = queue.front();
                queue.pop();
                for (auto w : nbr[u]) {
                    if (dist[w] == unseen) {
                        dist[w] = dist[u] + 1;
                        parent[w] = u;
                        queue.push(w);
                    } else if (w != parent[u]) {
                        best = std::min(best, dist[u] + dist[w] + 1);
                    }
                }
            }
        }
        return best;
    }

    std::size_t num_sections_;
    unsigned section_bits_;
    Rational rate_;
    std::uint64_t seed_;
    std::vector<CheckNode> checks_;
    std::vector<std::size_t> encoding_order_;
    std::shared_ptr<const GaloisField> field_;
    std::size_t info_sections_ = 0;
    std::vector<std::size_t> parity_of_check_;
    std::vector<std::vector<std::size_t>> adjacency_;
    unsigned girth_ = 0;
};

struct GraphBuildOptions {
    bool random_coefficients = false;
    std::size_t max_attempts = 2000;
};

namespace detail {

// Depth-first search for `count` subsets of size `picks` of {0..info-1} with no section
// pair repeated and every degree within one of the mean; candidate subsets are tried in a
// seeded random order. Section 0 ends up with a largest degree.
inline bool pair_disjoint_subsets(std::size_t info, std::size_t picks, std::size_t count, std::mt19937_64& rng,
                                  std::size_t budget, std::vector<std::vector<std::size_t>>& out) {
    std::vector<std::vector<std::size_t>> pool;
    std::vector<std::size_t> cur;
    auto enumerate = [&](auto&& self, std::size_t start) -> void {
        if (cur.size() == picks) {
            pool.push_back(cur);
            return;
        }
        for (std::size_t s = start; s < info; ++s) {
            cur.push_back(s);
            self(self, s + 1);
            cur.pop_back();
        }
    };
    enumerate(enumerate, 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t cap = (count * picks + info - 1) / info;
    const std::size_t floor = count * picks / info;
    std::vector<std::size_t> degree(info, 0);
    std::vector<std::vector<bool>> paired(info, std::vector<bool>(info, false));
    std::vector<std::size_t> chosen;
    std::size_t steps = 0;
    auto fits = [&](const std::vector<std::size_t>& sub) {
        for (std::size_t a = 0; a < sub.size(); ++a) {
            if (degree[sub[a]] >= cap) {
                return false;
            }
            for (std::size_t b = a + 1; b < sub.size(); ++b) {
                if (paired[sub[a]][sub[b]]) {
                    return false;
                }
            }
        }
        return true;
    };
    auto mark = [&](const std::vector<std::size_t>& sub, bool on) {
        for (std::size_t a = 0; a < sub.size(); ++a) {
            degree[sub[a]] += on ? 1 : static_cast<std::size_t>(-1);
            for (std::size_t b = a + 1; b < sub.size(); ++b) {
                paired[sub[a]][sub[b]] = on;
                paired[sub[b]][sub[a]] = on;
            }
        }
    };
    auto reachable = [&] {
        std::size_t deficit = 0;
        for (auto d : degree) {
            deficit += d < floor ? floor - d : 0;
        }
        return deficit <= (count - chosen.size()) * picks;
    };
    auto search = [&](auto&& self, std::size_t from) -> bool {
        if (!reachable()) {
            return false;
        }
        if (chosen.size() == count) {
            return true;
        }
        for (std::size_t k = from; k < pool.size(); ++k) {
            if (++steps > budget) {
                return false;
            }
            if (!fits(pool[k])) {
                continue;
            }
            chosen.push_back(k);
            mark(pool[k], true);
            if (self(self, k + 1)) {
                return true;
            }
            mark(pool[k], false);
            chosen.pop_back();
        }
        return false;
    };
    if (!search(search, 0)) {
        return false;
    }
    const auto top = static_cast<std::size_t>(std::max_element(degree.begin(), degree.end()) - degree.begin());
    out.clear();
    for (auto k : chosen) {
        auto sub = pool[k];
        for (auto& x : sub) {
            x = x == top ? 0 : (x == 0 ? top : x);
        }
        out.push_back(std::move(sub));
    }
    std::shuffle(out.begin(), out.end(), rng);
    return true;
}

}  // namespace detail

/// Randomized sequentially-encodable graph: check i ties parity section kappa + i to up to
/// three information sections (fewer when the checks cannot otherwise use distinct
/// section pairs) with balanced information-section degrees. A layout in which no two
/// information sections share more than one check (girth >= 6) is searched for first;
/// failing that, random layouts with girth >= 4 are accepted.
inline FactorGraph build_graph(std::size_t num_sections, unsigned section_bits, Rational rate, std::uint64_t seed,
                               const GraphBuildOptions& options = {}) {
    FactorGraph::validate_rate(num_sections, rate);
    const auto field = GaloisField::get(section_bits);
    const std::size_t info = num_sections * static_cast<std::size_t>(rate.num) / static_cast<std::size_t>(rate.den);
    const std::size_t num_checks = num_sections - info;
    const std::size_t pairs_available = info * (info - 1) / 2;
    std::size_t picks = std::min<std::size_t>(3, info);
    while (picks > 2 && num_checks * picks * (picks - 1) / 2 > pairs_available) {
        --picks;
    }

    auto assemble = [&](const std::vector<std::vector<std::size_t>>& subsets, std::mt19937_64& rng) {
        std::vector<CheckNode> checks;
        for (std::size_t i = 0; i < subsets.size(); ++i) {
            CheckNode check;
            check.sections = subsets[i];
            std::sort(check.sections.begin(), check.sections.end());
            check.sections.push_back(info + i);
            for (std::size_t j = 0; j < check.sections.size(); ++j) {
                check.coefficients.push_back(options.random_coefficients
                                                 ? 1 + static_cast<std::uint32_t>(rng() % field->order())
                                                 : 1u);
            }
            checks.push_back(std::move(check));
        }
        std::vector<std::size_t> order(num_checks);
        std::iota(order.begin(), order.end(), std::size_t{0});
        return FactorGraph(num_sections, section_bits, rate, seed, std::move(checks), std::move(order));
    };
    auto covers = [&](const std::vector<std::vector<std::size_t>>& subsets) {
        std::vector<bool> seen(info, false);
        for (const auto& sub : subsets) {
            for (auto s : sub) {
                seen[s] = true;
            }
        }
        return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
    };

    for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
        std::mt19937_64 rng(derive_seed(seed, 0x6772617068ULL, attempt));
        std::vector<std::vector<std::size_t>> subsets;
        const bool strict = attempt < std::min<std::size_t>(16, options.max_attempts / 2);
        if (strict) {
            if (!detail::pair_disjoint_subsets(info, picks, num_checks, rng, 200000, subsets)) {
                continue;
            }
        } else {
            std::vector<std::size_t> degree(info, 0);
            for (std::size_t i = 0; i < num_checks; ++i) {
                std::vector<std::pair<std::uint64_t, std::size_t>> order;
                for (std::size_t s = 0; s < info; ++s) {
                    order.emplace_back((static_cast<std::uint64_t>(degree[s]) << 32) | (rng() & 0xffffffffULL), s);
                }
                std::sort(order.begin(), order.end());
                std::vector<std::size_t> sub;
                for (std::size_t p = 0; p < picks; ++p) {
                    sub.push_back(order[p].second);
                    ++degree[order[p].second];
                }
                subsets.push_back(std::move(sub));
            }
        }
        if (!covers(subsets)) {
            continue;
        }
        auto graph = assemble(subsets, rng);
        if (graph.girth() >= (strict ? 6u : 4u)) {
            return graph;
        }
    }
    throw ConstructionFailure("no sequentially encodable graph with girth >= 4 found within the retry budget");
}

using Codeword = std::vector<std::uint32_t>;

/// Systematic encoding: the first kappa sections are the message fragments.
inline Codeword encode(const FactorGraph& graph, const Bits& info) {
    if (info.size() != graph.message_bits()) {
        throw LengthMismatch("info length " + std::to_string(info.size()) + " != " +
                             std::to_string(graph.message_bits()));
    }
    const auto& field = graph.field();
    Codeword word(graph.num_sections(), 0);
    for (std::size_t s = 0; s < graph.info_sections(); ++s) {
        word[s] = static_cast<std::uint32_t>(bits_to_uint(info, s * graph.section_bits(), graph.section_bits()));
    }
    for (auto a : graph.encoding_order()) {
        const auto& check = graph.checks()[a];
        const auto parity = graph.parity_of_check()[a];
        std::uint32_t acc = 0;
        std::uint32_t parity_coeff = 1;
        for (std::size_t j = 0; j < check.degree(); ++j) {
            if (check.sections[j] == parity) {
                parity_coeff = check.coefficients[j];
            } else {
                acc ^= field.mul(check.coefficients[j], word[check.sections[j]]);
            }
        }
        word[parity] = field.div(acc, parity_coeff);
    }
    return word;
}

[[nodiscard]] inline bool satisfies_checks(const FactorGraph& graph, const Codeword& word) {
    if (word.size() != graph.num_sections()) {
        return false;
    }
    const auto& field = graph.field();
    for (const auto& check : graph.checks()) {
        std::uint32_t acc = 0;
        for (std::size_t j = 0; j < check.degree(); ++j) {
            acc ^= field.mul(check.coefficients[j], word[check.sections[j]]);
        }
        if (acc != 0) {
            return false;
        }
    }
    return true;
}

/// Strips parity sections and reassembles the message bits.
[[nodiscard]] inline Bits message_from_codeword(const FactorGraph& graph, const Codeword& word) {
    Bits bits;
    bits.reserve(graph.message_bits());
    for (std::size_t s = 0; s < graph.info_sections(); ++s) {
        uint_to_bits(word[s], graph.section_bits(), bits);
    }
    return bits;
}

inline nlohmann::json graph_to_json(const FactorGraph& graph) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : graph.checks()) {
        checks.push_back({{"sections", c.sections}, {"coeffs", c.coefficients}});
    }
    return {{"L", graph.num_sections()},
            {"v", graph.section_bits()},
            {"rate", graph.rate().str()},
            {"seed", graph.seed()},
            {"checks", checks},
            {"encoding_order", graph.encoding_order()}};
}

inline FactorGraph graph_from_json(const nlohmann::json& j) {
    try {
        std::vector<CheckNode> checks;
        for (const auto& c : j.at("checks")) {
            checks.push_back({c.at("sections").get<std::vector<std::size_t>>(),
                              c.at("coeffs").get<std::vector<std::uint32_t>>()});
        }
        return FactorGraph(j.at("L").get<std::size_t>(), j.at("v").get<unsigned>(),
                           Rational::parse(j.at("rate").get<std::string>()), j.at("seed").get<std::uint64_t>(),
                           std::move(checks), j.at("encoding_order").get<std::vector<std::size_t>>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed graph JSON: ") + e.what());
    }
}

}  // namespace codemix
