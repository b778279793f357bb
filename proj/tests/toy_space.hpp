#pragma once

// A small inverted-bottleneck space (15,000 genes) with exact synthetic
// accuracy and LUT latency, small enough to enumerate.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "chamnet/ees.hpp"
#include "chamnet/oracle.hpp"
#include "chamnet/resource.hpp"
#include "oracles.hpp"

namespace toy {

inline constexpr const char* kSchema = R"(format = chamnet-space/1
name = toy
bottleneck = inverted
input_channels = 3
resolution = 64 [32,64]
resolution_step = 8
channel_step = 8

stage        t          c            n          s    k
conv2d       -          16 [8,32]    1          2    3
bottleneck   4 [2,6]    24 [8,40]    2 [1,3]    2    3
bottleneck   4          32 [16,48]   2 [1,2]    2    3
avgpool      -          -            1          -    -
fc           -          10           -          -    -
)";

struct Problem {
    chamnet::SearchSpace space;
    chamnet::SyntheticAccuracyOracle accuracy;
    chamnet::LatencyLUT lut;
    chamnet::FitnessParams params;

    struct Acc {
        const chamnet::SyntheticAccuracyOracle* o;
        double accuracy(const chamnet::Gene& g) const { return o->evaluate(g); }
    };

    chamnet::FitnessResult fitness(const chamnet::Gene& g) const {
        return chamnet::evaluate(g, Acc{&accuracy}, chamnet::LutLatency{&space, &lut, {}}, params);
    }
};

/// Landscape noise makes each seed a different rugged problem; the latency
/// threshold sits at the given quantile of the enumerated latencies.
inline Problem make(std::uint64_t seed, double quantile = 0.4) {
    auto space = chamnet::parse_space(kSchema);
    const auto dev = chamnet::SyntheticDevice::cpu_like();
    Problem p{space, chamnet::SyntheticAccuracyOracle(space, seed, 0.01),
              chamnet::LatencyLUT(dev.platform, chamnet::generate_lut(dev, space)), {}};
    std::vector<double> lat;
    for (const auto& g : oracle::enumerate(space.bounds()))
        lat.push_back(chamnet::predict_latency(p.lut, chamnet::decode(space, g)));
    std::sort(lat.begin(), lat.end());
    p.params.thres = lat[std::size_t(quantile * double(lat.size() - 1))];
    return p;
}

/// Exhaustive maximum of the exact fitness, over feasible genes when any exist.
inline double brute_force_best(const Problem& p) {
    double best = -std::numeric_limits<double>::infinity(), best_feasible = best;
    for (const auto& g : oracle::enumerate(p.space.bounds())) {
        const auto r = p.fitness(g);
        best = std::max(best, r.fitness);
        if (r.feasible) best_feasible = std::max(best_feasible, r.fitness);
    }
    return std::isfinite(best_feasible) ? best_feasible : best;
}

}  // namespace toy
