#pragma once

// Efficient evolutionary search: an adaptive genetic algorithm maximizing the
// penalized fitness over genes. Elites survive unchanged; the rest of each
// generation is bred by uniform crossover and per-coordinate resampling with
// Srinivas-Patnaik style adaptive probabilities.

#include <algorithm>
#include <exception>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "chamnet/error.hpp"
#include "chamnet/fitness.hpp"
#include "chamnet/qmc.hpp"
#include "chamnet/rng.hpp"
#include "chamnet/space.hpp"

namespace chamnet {

struct EESConfig {
    std::size_t population = 96;
    std::size_t survivors = 12;
    std::size_t iterations = 100;
    std::pair<double, double> crossover_prob_bounds{0.5, 0.9};
    std::pair<double, double> mutation_prob_bounds{0.01, 0.1};
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const {
        if (population == 0) throw ConfigViolation("population must be positive");
        if (survivors == 0 || survivors > population)
            throw ConfigViolation("survivors must be in [1, population]");
        if (iterations == 0) throw ConfigViolation("iterations must be positive");
        for (const auto& [lo, hi] : {crossover_prob_bounds, mutation_prob_bounds})
            if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi))
                throw ConfigViolation("probability bounds must satisfy 0 <= low <= high <= 1");
    }
};

struct GenerationStats {
    double best = 0.0;
    double mean = 0.0;
};

struct SearchResult {
    Gene best_gene;
    FitnessResult best_fitness;
    std::vector<GenerationStats> history;
    std::size_t evaluations = 0;
    bool feasible_seen = false;
    std::vector<std::string> warnings;
};

/// With probability `prob` per coordinate, moves it to a uniformly drawn
/// different level of its range. Single-level coordinates never change.
inline Gene mutate(std::span<const GeneBound> bounds, const Gene& gene, double prob, Rng& rng) {
    if (gene.size() != bounds.size()) throw SpaceMismatch("gene length does not match the bounds");
    Gene out = gene;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (uniform01(rng) >= prob) continue;
        const GeneBound& b = bounds[i];
        const auto levels = static_cast<std::uint64_t>(b.levels());
        if (levels < 2) continue;
        const auto cur = static_cast<std::uint64_t>((out.values[i] - b.lower) / b.step);
        auto pick = uniform_index(rng, levels - 1);
        if (pick >= cur) ++pick;
        out.values[i] = b.value_at(static_cast<int>(pick));
    }
    return out;
}

inline Gene mutate(const SearchSpace& space, const Gene& gene, double prob, Rng& rng) {
    const auto b = space.bounds();
    return mutate(std::span<const GeneBound>(b), gene, prob, rng);
}

/// Uniform crossover: each coordinate swaps between the children with p = 0.5.
inline std::pair<Gene, Gene> crossover(const Gene& a, const Gene& b, Rng& rng) {
    if (a.size() != b.size())
        throw SpaceMismatch("crossover parents have " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()) + " entries");
    std::pair<Gene, Gene> kids{a, b};
    for (std::size_t i = 0; i < a.size(); ++i)
        if (rng() >> 63) std::swap(kids.first[i], kids.second[i]);
    return kids;
}

namespace detail {

/// Probability for an individual with shifted fitness f: `lo` at the
/// generation maximum rising linearly to `hi` at the mean, `hi` below it.
inline double adaptive_prob(double f, double fmax, double favg, std::pair<double, double> b) {
    const auto [lo, hi] = b;
    if (f < favg) return hi;
    if (fmax <= favg) return lo;
    return lo + (hi - lo) * (fmax - f) / (fmax - favg);
}

}  // namespace detail

/// Runs the search with an arbitrary thread-safe `fitness(gene) -> FitnessResult`.
/// `seeds` are placed into the initial population ahead of the QMC draw.
template <class FitnessFn>
SearchResult search(const SearchSpace& space, FitnessFn&& fitness, const EESConfig& cfg,
                    std::span<const Gene> seeds = {}) {
    cfg.validate();
    const auto bounds = space.bounds();
    Rng rng(derive_seed(cfg.seed, 0xEE5));

    std::vector<Gene> pop;
    for (const Gene& s : seeds) {
        require_valid(space, s);
        if (pop.size() < cfg.population && std::find(pop.begin(), pop.end(), s) == pop.end()) pop.push_back(s);
    }
    {
        const std::size_t want = static_cast<std::size_t>(
            std::min<std::uint64_t>(cfg.population, space.cardinality()));
        for (Gene& g : qmc_pool(space, want, derive_seed(cfg.seed, 0x9001))) {
            if (pop.size() >= cfg.population) break;
            if (std::find(pop.begin(), pop.end(), g) == pop.end()) pop.push_back(std::move(g));
        }
    }

    SearchResult result;
    std::unordered_map<Gene, FitnessResult, GeneHash> cache;
    bool have_best = false;

    auto evaluate_all = [&](const std::vector<Gene>& genes) {
        std::vector<Gene> todo;
        for (const Gene& g : genes)
            if (!cache.count(g) && std::find(todo.begin(), todo.end(), g) == todo.end()) todo.push_back(g);
        std::vector<FitnessResult> vals(todo.size());
        std::vector<std::exception_ptr> errs(todo.size());
        auto work = [&](std::size_t first, std::size_t stride) {
            for (std::size_t i = first; i < todo.size(); i += stride) {
                try {
                    vals[i] = fitness(todo[i]);
                } catch (...) {
                    errs[i] = std::current_exception();
                }
            }
        };
        const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, todo.size()));
        if (workers == 1) {
            work(0, 1);
        } else {
            std::vector<std::jthread> ts;
            for (std::size_t w = 0; w < workers; ++w) ts.emplace_back(work, w, workers);
        }
        for (std::size_t i = 0; i < todo.size(); ++i) {
            if (errs[i]) std::rethrow_exception(errs[i]);
            cache.emplace(todo[i], vals[i]);
            result.feasible_seen = result.feasible_seen || vals[i].feasible;
            // A feasible gene beats any infeasible one, even one with a tiny ramp penalty.
            const FitnessResult& cur = result.best_fitness;
            if (!have_best || (vals[i].feasible && !cur.feasible) ||
                (vals[i].feasible == cur.feasible && vals[i].fitness > cur.fitness)) {
                result.best_gene = todo[i];
                result.best_fitness = vals[i];
                have_best = true;
            }
        }
        result.evaluations += todo.size();
    };

    for (std::size_t gen = 0; gen < cfg.iterations; ++gen) {
        evaluate_all(pop);
        std::vector<std::size_t> rank(pop.size());
        std::iota(rank.begin(), rank.end(), 0);
        std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
            return cache.at(pop[a]).fitness > cache.at(pop[b]).fitness;
        });

        double sum = 0.0, fmin = cache.at(pop[rank.back()]).fitness;
        for (const Gene& g : pop) sum += cache.at(g).fitness;
        const FitnessResult& top = cache.at(pop[rank.front()]);
        result.history.push_back({top.fitness, sum / double(pop.size())});
        if (gen + 1 == cfg.iterations) break;

        // Probabilities adapt relative to the breeding pool, shifted to be non-negative.
        const std::size_t keep = std::min(cfg.survivors, pop.size());
        std::vector<Gene> elite;
        double elite_sum = 0.0;
        for (std::size_t i = 0; i < keep; ++i) {
            elite.push_back(pop[rank[i]]);
            elite_sum += cache.at(elite.back()).fitness;
        }
        const double fmax = top.fitness - fmin;
        const double favg = elite_sum / double(keep) - fmin;
        auto shifted = [&](const Gene& g) { return cache.at(g).fitness - fmin; };
        auto tournament = [&]() -> const Gene& {
            const auto a = uniform_index(rng, elite.size());
            const auto b = uniform_index(rng, elite.size());
            return elite[std::min(a, b)];  // elite is sorted best-first
        };

        std::vector<Gene> next = elite;
        std::size_t redraws = 0;
        while (next.size() < cfg.population) {
            const Gene& pa = tournament();
            const Gene& pb = tournament();
            const double f = std::max(shifted(pa), shifted(pb));
            const double pc = detail::adaptive_prob(f, fmax, favg, cfg.crossover_prob_bounds);
            const double pm = detail::adaptive_prob(f, fmax, favg, cfg.mutation_prob_bounds);
            auto kids = uniform01(rng) < pc ? crossover(pa, pb, rng) : std::pair<Gene, Gene>{pa, pb};
            for (Gene* kid : {&kids.first, &kids.second}) {
                if (next.size() >= cfg.population) break;
                Gene child = mutate(bounds, *kid, pm, rng);
                // Redraw duplicates; the cap keeps tiny spaces from looping forever.
                if (std::find(next.begin(), next.end(), child) != next.end() && ++redraws <= 64 * cfg.population) continue;
                next.push_back(std::move(child));
            }
        }
        pop = std::move(next);
    }

    if (!result.feasible_seen)
        result.warnings.push_back("InfeasibleSpace: no evaluated architecture met the resource threshold");
    return result;
}

template <AccuracyPredictor A, ResourcePredictor R>
SearchResult search(const SearchSpace& space, const A& acc, const R& res, const FitnessParams& params,
                    const EESConfig& cfg, std::span<const Gene> seeds = {}) {
    params.validate();
    return search(space, [&](const Gene& g) { return evaluate(g, acc, res, params); }, cfg, seeds);
}

}  // namespace chamnet
