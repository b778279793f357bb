#include <gtest/gtest.h>

#include <atomic>
#include <mutex>
#include <set>

#include "chamnet/builtin_spaces.hpp"
#include "chamnet/ees.hpp"
#include "toy_space.hpp"

using namespace chamnet;

TEST(Mutate, ZeroProbabilityIsIdentity) {
    const auto sp = chamnet_mobile();
    Rng rng(1);
    for (const Gene& g : qmc_pool(sp, 100, 1)) EXPECT_EQ(mutate(sp, g, 0.0, rng), g);
}

TEST(Mutate, SingleLevelCoordinateNeverMoves) {
    const std::vector<GeneBound> b{{5, 5, 1}, {0, 3, 1}};
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        const Gene m = mutate(b, Gene{{5, 1}}, 1.0, rng);
        EXPECT_EQ(m[0], 5);
        EXPECT_NE(m[1], 1);
    }
}

TEST(Mutate, FlipRateMatchesProbability) {
    const auto sp = chamnet_mobile();
    const auto b = sp.bounds();
    const Gene g = sp.default_gene();
    Rng rng(3);
    for (double prob : {0.05, 0.3}) {
        std::size_t flips = 0, coords = 0;
        for (int t = 0; t < 10000; ++t) {
            const Gene m = mutate(b, g, prob, rng);
            ASSERT_TRUE(validate(sp, m));
            for (std::size_t i = 0; i < g.size(); ++i) flips += m[i] != g[i];
            coords += g.size();
        }
        EXPECT_NEAR(double(flips) / double(coords), prob, 0.02 * prob);
    }
}

TEST(Mutate, LengthMismatch) {
    Rng rng(0);
    EXPECT_THROW(mutate(chamnet_res(), Gene{{1, 2}}, 0.5, rng), SpaceMismatch);
}

TEST(Crossover, EqualParentsGiveEqualChildren) {
    Rng rng(4);
    const Gene a = chamnet_mobile().default_gene();
    const auto [c1, c2] = crossover(a, a, rng);
    EXPECT_EQ(c1, a);
    EXPECT_EQ(c2, a);
}

TEST(Crossover, ConservesValuesPerPositionAndSwapsHalf) {
    const auto sp = chamnet_mobile();
    const auto pool = qmc_pool(sp, 2, 9);
    Gene a = pool[0], b = pool[1];
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] == b[i]) b[i] = b[i] == sp.bounds()[i].lower ? sp.bounds()[i].upper : sp.bounds()[i].lower;
    Rng rng(5);
    std::size_t swaps = 0, coords = 0;
    for (int t = 0; t < 10000; ++t) {
        const auto [c1, c2] = crossover(a, b, rng);
        ASSERT_TRUE(validate(sp, c1));
        ASSERT_TRUE(validate(sp, c2));
        for (std::size_t i = 0; i < a.size(); ++i) {
            ASSERT_TRUE((c1[i] == a[i] && c2[i] == b[i]) || (c1[i] == b[i] && c2[i] == a[i]));
            swaps += c1[i] == b[i];
            ++coords;
        }
    }
    EXPECT_NEAR(double(swaps) / double(coords), 0.5, 0.02);
    // A single position over 10,000 trials is also within the band.
    std::size_t first = 0;
    for (int t = 0; t < 10000; ++t) first += crossover(a, b, rng).first[0] == b[0];
    EXPECT_NEAR(double(first) / 10000.0, 0.5, 0.02);
}

TEST(Crossover, LengthMismatch) {
    Rng rng(0);
    EXPECT_THROW(crossover(Gene{{1, 2}}, Gene{{1}}, rng), SpaceMismatch);
}

TEST(EESConfig, Validation) {
    EESConfig c;
    EXPECT_EQ(c.population, 96u);
    EXPECT_EQ(c.survivors, 12u);
    EXPECT_EQ(c.iterations, 100u);
    EXPECT_NO_THROW(c.validate());
    c.survivors = 97;
    EXPECT_THROW(c.validate(), ConfigViolation);
    c = EESConfig{};
    c.mutation_prob_bounds = {0.2, 0.1};
    EXPECT_THROW(c.validate(), ConfigViolation);
    c = EESConfig{};
    c.crossover_prob_bounds = {0.5, 1.5};
    EXPECT_THROW(c.validate(), ConfigViolation);
    c = EESConfig{};
    c.population = 0;
    EXPECT_THROW(c.validate(), ConfigViolation);
}

TEST(AdaptiveProb, ScalesDownAboveAverage) {
    const std::pair<double, double> b{0.5, 0.9};
    EXPECT_EQ(detail::adaptive_prob(1.0, 2.0, 1.5, b), 0.9);
    EXPECT_EQ(detail::adaptive_prob(2.0, 2.0, 1.5, b), 0.5);
    EXPECT_NEAR(detail::adaptive_prob(1.75, 2.0, 1.5, b), 0.7, 1e-15);
    EXPECT_EQ(detail::adaptive_prob(1.0, 1.0, 1.0, b), 0.5);
}

TEST(Search, ToySpaceReachesTheEnumeratedOptimum) {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = toy::make(seed);
        const double best = toy::brute_force_best(p);
        EESConfig cfg;
        cfg.seed = seed;
        const auto r = search(p.space, [&](const Gene& g) { return p.fitness(g); }, cfg);
        if (r.best_fitness.fitness >= best - 0.01 * std::abs(best)) ++ok;
        EXPECT_LE(r.best_fitness.fitness, best);
    }
    EXPECT_GE(ok, 9);
}

TEST(Search, NoVariationMeansConstantBest) {
    const auto p = toy::make(1);
    EESConfig cfg;
    cfg.population = cfg.survivors = 12;
    cfg.mutation_prob_bounds = {0.0, 0.0};
    cfg.iterations = 20;
    const auto r = search(p.space, [&](const Gene& g) { return p.fitness(g); }, cfg);
    ASSERT_EQ(r.history.size(), 20u);
    for (const auto& h : r.history) EXPECT_EQ(h.best, r.history.front().best);
    EXPECT_EQ(r.evaluations, 12u);
}

TEST(Search, InvariantsHold) {
    const auto p = toy::make(2);
    std::mutex mu;
    std::set<Gene> seen;
    std::atomic<bool> invalid{false};
    auto f = [&](const Gene& g) {
        if (!validate(p.space, g)) invalid = true;
        std::lock_guard lock(mu);
        EXPECT_TRUE(seen.insert(g).second) << "re-evaluated " << to_string(g);
        return p.fitness(g);
    };
    EESConfig cfg;
    cfg.iterations = 40;
    cfg.seed = 11;
    const auto r = search(p.space, f, cfg);
    EXPECT_FALSE(invalid);
    ASSERT_EQ(r.history.size(), 40u);
    for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_GE(r.history[i].best, r.history[i - 1].best);
    EXPECT_EQ(r.best_fitness, p.fitness(r.best_gene));
    EXPECT_GE(r.history.back().best, r.best_fitness.fitness);
    EXPECT_TRUE(r.best_fitness.feasible);
    EXPECT_EQ(r.evaluations, seen.size());
    EXPECT_TRUE(r.feasible_seen);
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Search, ReproducibleAndThreadIndependent) {
    const auto p = toy::make(3);
    auto f = [&](const Gene& g) { return p.fitness(g); };
    EESConfig cfg;
    cfg.iterations = 25;
    cfg.seed = 4;
    const auto a = search(p.space, f, cfg), b = search(p.space, f, cfg);
    cfg.threads = 3;
    const auto c = search(p.space, f, cfg);
    for (const auto* r : {&b, &c}) {
        EXPECT_EQ(r->best_gene, a.best_gene);
        EXPECT_EQ(r->best_fitness, a.best_fitness);
        ASSERT_EQ(r->history.size(), a.history.size());
        for (std::size_t i = 0; i < a.history.size(); ++i) {
            EXPECT_EQ(r->history[i].best, a.history[i].best);
            EXPECT_EQ(r->history[i].mean, a.history[i].mean);
        }
        EXPECT_EQ(r->evaluations, a.evaluations);
    }
}

TEST(Search, InfeasibleThresholdWarnsButReturns) {
    auto p = toy::make(4);
    p.params.thres = 1e-6;
    EESConfig cfg;
    cfg.iterations = 5;
    const auto r = search(p.space, [&](const Gene& g) { return p.fitness(g); }, cfg);
    EXPECT_FALSE(r.feasible_seen);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("InfeasibleSpace"), std::string::npos);
    EXPECT_TRUE(validate(p.space, r.best_gene));
}

TEST(Search, SeedsEnterTheFirstGeneration) {
    const auto p = toy::make(5);
    const Gene s = p.space.default_gene();
    std::vector<Gene> first_calls;
    EESConfig cfg;
    cfg.iterations = 1;
    const auto r = search(
        p.space,
        [&](const Gene& g) {
            first_calls.push_back(g);
            return p.fitness(g);
        },
        cfg, std::span<const Gene>(&s, 1));
    ASSERT_FALSE(first_calls.empty());
    EXPECT_EQ(first_calls.front(), s);
    EXPECT_EQ(r.evaluations, 96u);
    Gene bad = s;
    bad[0] = 1;
    EXPECT_THROW(search(p.space, [&](const Gene& g) { return p.fitness(g); }, cfg, std::span<const Gene>(&bad, 1)),
                 InvalidGene);
}

TEST(Search, PredictorOverloadUsesFitnessParams) {
    const auto p = toy::make(6);
    EESConfig cfg;
    cfg.iterations = 10;
    const auto r = search(p.space, toy::Problem::Acc{&p.accuracy}, LutLatency{&p.space, &p.lut, {}}, p.params, cfg);
    EXPECT_EQ(r.best_fitness, p.fitness(r.best_gene));
    FitnessParams bad = p.params;
    bad.alpha = -1;
    EXPECT_THROW(search(p.space, toy::Problem::Acc{&p.accuracy}, LutLatency{&p.space, &p.lut, {}}, bad, cfg),
                 ConfigViolation);
}
