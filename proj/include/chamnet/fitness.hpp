#pragma once

// Penalized fitness R = A - [alpha * H(F - thres)]^w, with H read either as a
// ramp max(z, 0) (default) or as the 0/1 step.

#include <cmath>
#include <concepts>
#include <string>

#include "chamnet/error.hpp"
#include "chamnet/gp.hpp"
#include "chamnet/resource.hpp"
#include "chamnet/space.hpp"

namespace chamnet {

enum class PenaltyMode { ramp, step };
enum class ResourceKind { latency, energy };

inline std::string_view unit_of(ResourceKind k) { return k == ResourceKind::latency ? "ms" : "mJ"; }

struct FitnessParams {
    double alpha = 10.0;  // 1/ms or 1/mJ
    double w = 2.0;
    double thres = 20.0;  // ms or mJ
    PenaltyMode penalty_mode = PenaltyMode::ramp;
    ResourceKind resource_kind = ResourceKind::latency;

    void validate() const {
        if (!(alpha > 0.0)) throw ConfigViolation("alpha must be positive");
        if (!(w > 0.0)) throw ConfigViolation("w must be positive");
        if (!(thres > 0.0)) throw ConfigViolation("thres must be positive");
    }
};

struct FitnessResult {
    double fitness = 0.0;
    double accuracy = 0.0;
    double resource = 0.0;
    bool feasible = true;

    bool operator==(const FitnessResult&) const = default;
};

/// Fitness from an already-predicted accuracy and resource figure.
inline FitnessResult score(double accuracy, double resource, const FitnessParams& p) {
    FitnessResult r{accuracy, accuracy, resource, resource <= p.thres};
    if (r.feasible) return r;
    const double penalty = p.penalty_mode == PenaltyMode::ramp ? std::pow(p.alpha * (resource - p.thres), p.w)
                                                               : std::pow(p.alpha, p.w);
    r.fitness = accuracy - penalty;
    return r;
}

template <class T>
concept AccuracyPredictor = requires(const T& t, const Gene& g) {
    { t.accuracy(g) } -> std::convertible_to<double>;
};

template <class T>
concept ResourcePredictor = requires(const T& t, const Gene& g) {
    { t.resource(g) } -> std::convertible_to<double>;
};

template <AccuracyPredictor A, ResourcePredictor R>
FitnessResult evaluate(const Gene& gene, const A& acc, const R& res, const FitnessParams& params) {
    return score(acc.accuracy(gene), res.resource(gene), params);
}

/// GP posterior mean as the accuracy estimate.
struct GpAccuracy {
    const GenePredictor* model = nullptr;
    double accuracy(const Gene& g) const { return model->predict(g).mean; }
};

/// Latency in ms from an operator LUT.
struct LutLatency {
    const SearchSpace* space = nullptr;
    const LatencyLUT* lut = nullptr;
    LutQueryOptions options{};
    double resource(const Gene& g) const { return predict_latency(*lut, decode(*space, g), options); }
};

/// Energy in mJ from a GP energy model.
struct GpEnergy {
    const EnergyModel* model = nullptr;
    double resource(const Gene& g) const { return model->predict_mj(g); }
};

}  // namespace chamnet
