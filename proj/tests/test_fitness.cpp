#include <gtest/gtest.h>

#include <algorithm>

#include "chamnet/fitness.hpp"
#include "chamnet/rng.hpp"

using namespace chamnet;

namespace {

struct Table {
    double acc, res;
    double accuracy(const Gene&) const { return acc; }
    double resource(const Gene&) const { return res; }
};

}  // namespace

TEST(Fitness, InactivePenalty) {
    const auto r = score(0.70, 15.0, FitnessParams{});
    EXPECT_EQ(r.fitness, 0.70);
    EXPECT_TRUE(r.feasible);
}

TEST(Fitness, RampPenaltyWorkedExample) {
    const auto r = score(0.70, 21.0, FitnessParams{});
    EXPECT_NEAR(r.fitness, -99.30, 1e-12);
    EXPECT_FALSE(r.feasible);
    EXPECT_EQ(r.accuracy, 0.70);
    EXPECT_EQ(r.resource, 21.0);
}

TEST(Fitness, BoundaryIsFeasible) {
    const auto r = score(0.70, 20.0, FitnessParams{});
    EXPECT_EQ(r.fitness, 0.70);
    EXPECT_TRUE(r.feasible);
}

TEST(Fitness, StepMode) {
    FitnessParams p;
    p.penalty_mode = PenaltyMode::step;
    EXPECT_NEAR(score(0.70, 20.001, p).fitness, 0.70 - 100.0, 1e-12);
    EXPECT_NEAR(score(0.70, 500.0, p).fitness, 0.70 - 100.0, 1e-12);
    EXPECT_EQ(score(0.70, 20.0, p).fitness, 0.70);
}

TEST(Fitness, ParamValidation) {
    FitnessParams p;
    p.alpha = 0.0;
    EXPECT_THROW(p.validate(), ConfigViolation);
    p = FitnessParams{};
    p.w = -1.0;
    EXPECT_THROW(p.validate(), ConfigViolation);
    p = FitnessParams{};
    p.thres = 0.0;
    EXPECT_THROW(p.validate(), ConfigViolation);
    EXPECT_EQ(unit_of(ResourceKind::latency), "ms");
    EXPECT_EQ(unit_of(ResourceKind::energy), "mJ");
}

TEST(Fitness, FeasibleAlwaysBeatsClearlyInfeasible) {
    Rng rng(3);
    const FitnessParams p;
    for (int i = 0; i < 10000; ++i) {
        const double af = uniform01(rng), ai = uniform01(rng);
        const double rf = p.thres * uniform01(rng);
        const double ri = p.thres + 0.1 + 50.0 * uniform01(rng);
        EXPECT_GT(score(af, rf, p).fitness, score(ai, ri, p).fitness);
    }
}

TEST(Fitness, RampIsNonIncreasingInResource) {
    const FitnessParams p;
    double prev = score(0.6, 0.0, p).fitness;
    for (double f = 0.01; f < 60.0; f += 0.01) {
        const double cur = score(0.6, f, p).fitness;
        EXPECT_LE(cur, prev);
        prev = cur;
    }
}

TEST(Fitness, ArgmaxMatchesAccuracyWhenAllFeasible) {
    Rng rng(4);
    const FitnessParams p;
    for (int t = 0; t < 200; ++t) {
        std::vector<Table> c(20);
        for (auto& x : c) x = {uniform01(rng), p.thres * uniform01(rng)};
        const Gene g;
        auto by_fit = std::max_element(c.begin(), c.end(), [&](const Table& a, const Table& b) {
            return evaluate(g, a, a, p).fitness < evaluate(g, b, b, p).fitness;
        });
        auto by_acc = std::max_element(c.begin(), c.end(), [](const Table& a, const Table& b) { return a.acc < b.acc; });
        EXPECT_EQ(by_fit, by_acc);
    }
}

TEST(Fitness, FeasibleImpliesFitnessEqualsAccuracy) {
    Rng rng(5);
    for (auto mode : {PenaltyMode::ramp, PenaltyMode::step}) {
        FitnessParams p;
        p.penalty_mode = mode;
        for (int i = 0; i < 1000; ++i) {
            const auto r = score(uniform01(rng), 40.0 * uniform01(rng), p);
            EXPECT_EQ(r.feasible, r.resource <= p.thres);
            if (r.feasible) EXPECT_EQ(r.fitness, r.accuracy);
        }
    }
}
