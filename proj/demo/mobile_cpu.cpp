// End-to-end run on the Mobile space with a synthetic CPU:
// accuracy predictor, latency LUT, then one search per latency budget.

#include <cstdio>

#include "chamnet/chamnet.hpp"

using namespace chamnet;

int main() {
    const auto space = chamnet_mobile().with_channel_step(8);

    const SyntheticAccuracyOracle oracle(space, 1);
    SamplerConfig scfg;
    scfg.seed = 1;
    const auto build = build_predictor(space, oracle, scfg);
    std::printf("accuracy predictor: %zu samples, %zu rounds, LOO-MSE %.2e\n", build.observations.size(),
                build.iterations, build.hyper.loo_mse);

    const auto dev = SyntheticDevice::cpu_like();
    const LatencyLUT lut(dev.platform, generate_lut(dev, space));
    std::printf("latency LUT: %zu records\n", lut.record_count());

    const GpAccuracy acc{&build.predictor};
    const LutLatency lat{&space, &lut, {}};
    std::vector<Gene> seeds;
    std::printf("\n%8s %9s %9s %8s  %s\n", "budget", "accuracy", "latency", "MFLOPs", "gene");
    for (double ms : {4.0, 6.0, 10.0, 15.0, 20.0, 30.0}) {
        FitnessParams params;
        params.thres = ms;
        EESConfig ecfg;
        ecfg.seed = 1;
        const auto r = search(space, acc, lat, params, ecfg, seeds);
        seeds.push_back(r.best_gene);
        std::printf("%6.0fms %9.3f %7.2fms %8.1f  %s%s\n", ms, r.best_fitness.accuracy, r.best_fitness.resource,
                    double(flops(space, r.best_gene)) * 1e-6, to_string(r.best_gene).c_str(),
                    r.best_fitness.feasible ? "" : "  (infeasible)");
    }
}
