#include <gtest/gtest.h>

#include <chrono>
#include <sstream>
#include <thread>

#include "chamnet/builtin_spaces.hpp"
#include "chamnet/oracle.hpp"
#include "chamnet/qmc.hpp"
#include "chamnet/resource.hpp"

using namespace chamnet;

namespace {

OperatorKey conv_key(int h, int cin, int cout) { return {OpKind::conv2d, h, h, cin, cout, 1, 1, 1}; }

Layer conv_layer(int h, int cin, int cout) {
    return {OpKind::conv2d, 0, h, h, cin, h, h, cout, 1, 1, 1, 0};
}

/// Sum by linear scan over the record list, independent of the hash lookup.
std::int64_t scan_sum(const std::vector<LatencyRecord>& recs, const ArchitectureDescription& arch) {
    std::int64_t total = 0;
    for (const Layer& l : arch) {
        const OperatorKey k = key_of(l);
        bool found = false;
        for (const auto& r : recs)
            if (r.key == k) {
                total += r.latency_us;
                found = true;
                break;
            }
        if (!found) ADD_FAILURE() << "no record for " << to_string(k);
    }
    return total;
}

std::vector<LatencyRecord> many_records(std::size_t n) {
    std::vector<LatencyRecord> recs;
    recs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int a = int(i % 700) + 1, b = int(i / 700) + 1;
        recs.push_back({{OpKind::inverted_bottleneck, 56, 56, a, b, 1 + int(i % 2), 3, 6}, std::int64_t(i % 977) + 1});
    }
    return recs;
}

}  // namespace

TEST(Lut, DuplicateKeysTakeTheMean) {
    const LatencyLUT lut("p", {{conv_key(56, 16, 32), 100}, {conv_key(56, 16, 32), 200}});
    EXPECT_EQ(lut.record_count(), 1u);
    EXPECT_EQ(lut.find(conv_key(56, 16, 32)), 150);
}

TEST(Lut, EmptyStream) {
    std::istringstream in("chamnet-lut v1 platform=empty\n");
    const auto lut = read_lut(in);
    EXPECT_EQ(lut.record_count(), 0u);
    EXPECT_EQ(lut.platform(), "empty");
    EXPECT_EQ(predict_latency(lut, {}), 0.0);
}

TEST(Lut, RejectsNonPositiveLatency) {
    EXPECT_THROW(LatencyLUT("p", {{conv_key(1, 1, 1), 0}}), Error);
}

TEST(Lut, MalformedRecordNamesTheLine) {
    std::istringstream in(std::string("chamnet-lut v1 platform=x\n") + std::string(kLutColumns) +
                          "\nconv2d,56,56,16,32,1,1,1,40\nconv2d,56,56,16,32,1,1,1\n");
    try {
        read_lut(in);
        FAIL();
    } catch (const MalformedRecord& e) {
        EXPECT_EQ(e.line(), 4u);
    }
    std::istringstream bad_kind("chamnet-lut v1 platform=x\nwarp,1,1,1,1,1,1,1,5\n");
    EXPECT_THROW(read_lut(bad_kind), MalformedRecord);
    std::istringstream neg("chamnet-lut v1 platform=x\nfc,1,1,1,1,1,1,1,-5\n");
    EXPECT_THROW(read_lut(neg), MalformedRecord);
    std::istringstream no_header("conv2d,56,56,16,32,1,1,1,40\n");
    EXPECT_THROW(read_lut(no_header), MalformedRecord);
}

TEST(Lut, ThreeHundredFiftyThousandRecordsRoundTripQuickly) {
    const auto recs = many_records(350'000);
    const auto t0 = std::chrono::steady_clock::now();
    const LatencyLUT lut("bulk", recs);
    std::stringstream ss;
    write_lut(ss, lut);
    const std::string first = ss.str();
    const auto back = read_lut(ss);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_EQ(lut.record_count(), 350'000u);
    EXPECT_EQ(back.record_count(), 350'000u);
    EXPECT_LT(s, 10.0);
    std::stringstream again;
    write_lut(again, back);
    EXPECT_EQ(again.str(), first);
    for (std::size_t i = 0; i < recs.size(); i += 997) EXPECT_EQ(back.find(recs[i].key), recs[i].latency_us);
}

TEST(Latency, TwoOperatorsSum) {
    const LatencyLUT lut("p", {{conv_key(8, 4, 4), 3000}, {conv_key(8, 4, 8), 4500}});
    EXPECT_EQ(predict_latency(lut, {conv_layer(8, 4, 4), conv_layer(8, 4, 8)}), 7.5);
    EXPECT_EQ(predict_latency_us(lut, {conv_layer(8, 4, 4), conv_layer(8, 4, 8)}), 7500);
    EXPECT_EQ(predict_latency(lut, {}), 0.0);
}

TEST(Latency, MissingOperatorListsEveryKey) {
    const LatencyLUT lut("p", {{conv_key(8, 4, 4), 3000}});
    try {
        predict_latency(lut, {conv_layer(8, 4, 4), conv_layer(8, 4, 9), conv_layer(8, 5, 9), conv_layer(8, 4, 9)});
        FAIL();
    } catch (const MissingOperator& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2 operator(s)"), std::string::npos);
        EXPECT_NE(msg.find(to_string(conv_key(8, 4, 9))), std::string::npos);
        EXPECT_NE(msg.find(to_string(conv_key(8, 5, 9))), std::string::npos);
    }
}

TEST(Latency, InterpolationFillsChannelGaps) {
    const LatencyLUT lut("p", {{conv_key(8, 8, 8), 100},
                               {conv_key(8, 8, 16), 200},
                               {conv_key(8, 16, 8), 200},
                               {conv_key(8, 16, 16), 400}});
    LutQueryOptions on;
    on.interpolate = true;
    EXPECT_EQ(lut.lookup(conv_key(8, 12, 12)), std::nullopt);
    EXPECT_EQ(lut.lookup(conv_key(8, 12, 12), on), 225);
    EXPECT_EQ(lut.lookup(conv_key(8, 8, 12), on), 150);
    // Outside the grid: nearest neighbour.
    EXPECT_EQ(lut.lookup(conv_key(8, 4, 4), on), 100);
    // Different spatial size: still a miss.
    EXPECT_EQ(lut.lookup(conv_key(9, 8, 8), on), std::nullopt);
}

TEST(Latency, MobileDefaultMatchesHandSum) {
    const auto sp = chamnet_mobile();
    const auto dev = SyntheticDevice::cpu_like();
    const auto arch = decode(sp, sp.default_gene());
    std::vector<LatencyRecord> recs;
    for (const Layer& l : arch) recs.push_back({key_of(l), dev.op_latency_us(key_of(l))});
    const LatencyLUT lut(dev.platform, recs);
    EXPECT_EQ(predict_latency_us(lut, arch), scan_sum(recs, arch));
}

TEST(Latency, AdditiveOverConcatenation) {
    const auto sp = chamnet_mobile().with_channel_step(8);
    const auto dev = SyntheticDevice::dsp_like();
    const LatencyLUT lut(dev.platform, generate_lut(dev, sp));
    const auto pool = qmc_pool(sp, 40, 4);
    for (std::size_t i = 0; i + 1 < pool.size(); i += 2) {
        auto a = decode(sp, pool[i]);
        const auto b = decode(sp, pool[i + 1]);
        const auto ta = predict_latency_us(lut, a), tb = predict_latency_us(lut, b);
        a.insert(a.end(), b.begin(), b.end());
        EXPECT_EQ(predict_latency_us(lut, a), ta + tb);
    }
}

TEST(Latency, ConcurrentQueriesMatchSerial) {
    const auto sp = chamnet_mobile().with_channel_step(8);
    const auto dev = SyntheticDevice::cpu_like();
    const LatencyLUT lut(dev.platform, generate_lut(dev, sp));
    const auto pool = qmc_pool(sp, 400, 8);
    std::vector<std::int64_t> serial;
    for (const Gene& g : pool) serial.push_back(predict_latency_us(lut, decode(sp, g)));
    std::vector<std::int64_t> par(pool.size());
    {
        std::vector<std::jthread> ts;
        for (std::size_t w = 0; w < 4; ++w)
            ts.emplace_back([&, w] {
                for (std::size_t i = w; i < pool.size(); i += 4) par[i] = predict_latency_us(lut, decode(sp, pool[i]));
            });
    }
    EXPECT_EQ(par, serial);
}

TEST(Energy, ExploitCountMustBeZero) {
    const auto sp = chamnet_mobile();
    SyntheticEnergyOracle e(sp, SyntheticDevice::cpu_like());
    SamplerConfig cfg;
    cfg.exploit_count = 3;
    EXPECT_THROW(build_energy_predictor(sp, e, cfg), ConfigViolation);
}

TEST(Energy, ExplorationOnlyWithinTwiceTheFullRun) {
    const auto sp = chamnet_mobile();
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SyntheticEnergyOracle oracle(sp, SyntheticDevice::cpu_like(), 1.5, 1.0, seed);
        const auto holdout = qmc_pool(sp, 512, derive_seed(seed, 404));
        auto holdout_mse = [&](const GenePredictor& p) {
            double s = 0.0;
            for (const Gene& g : holdout) {
                const double e = p.predict(g).mean - oracle.evaluate(g);
                s += e * e;
            }
            return s / double(holdout.size());
        };
        SamplerConfig explore;
        explore.seed = seed;
        explore.explore_count = 16;
        explore.exploit_count = 0;
        explore.mse_threshold = 1e-300;
        explore.gp.center_targets = true;
        const auto only = build_energy_predictor(sp, oracle, explore, "cpu");
        SamplerConfig both = explore;
        both.explore_count = 8;
        both.exploit_count = 8;
        const auto full = build_predictor(sp, oracle, both);
        EXPECT_EQ(only.build.observations.size(), 240u);
        for (const auto& o : only.build.observations) EXPECT_NE(o.source, SampleSource::exploit);
        if (holdout_mse(only.model.predictor()) <= 2.0 * holdout_mse(full.predictor)) ++ok;
    }
    EXPECT_EQ(ok, 10);
}

TEST(Energy, BuildFinishesWellUnderAMinute) {
    const auto sp = chamnet_mobile();
    SyntheticEnergyOracle oracle(sp, SyntheticDevice::dsp_like());
    SamplerConfig cfg;
    cfg.explore_count = 16;
    cfg.exploit_count = 0;
    cfg.mse_threshold = 1e-300;
    cfg.gp.center_targets = true;
    const auto t0 = std::chrono::steady_clock::now();
    const auto b = build_energy_predictor(sp, oracle, cfg, "dsp");
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_EQ(b.build.observations.size(), 240u);
    EXPECT_LT(s, 60.0);
    for (const Gene& g : qmc_pool(sp, 2048, 77)) EXPECT_GE(b.model.predict_mj(g), 0.0);
}

TEST(Energy, PredictionsAreClampedAtZero) {
    const auto sp = chamnet_res();
    const auto genes = qmc_pool(sp, 6, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(6, -5.0);
    const EnergyModel m("p", GenePredictor(sp.name(), sp.bounds(),
                                           GPModel::fit(normalized_matrix(sp.bounds(), genes), y, 1.0, 1e-4)));
    for (const Gene& g : genes) EXPECT_EQ(m.predict_mj(g), 0.0);
}

TEST(Trace, WorkedExampleIs42mJ) {
    PowerTrace t;
    t.voltage = 4.2;
    t.sample_interval = 200e-6;
    t.baseline_current = 0.3;
    t.samples.assign(50'000, 1.3);  // 10 s at 1 A above baseline
    t.run_count = 1000;
    EXPECT_NEAR(trace_to_energy(t), 42.0, 1e-9);
}

TEST(Trace, BaselineOnlyIsZero) {
    PowerTrace t{4.2, 200e-6, std::vector<double>(1000, 0.5), 0.5, 10};
    EXPECT_EQ(trace_to_energy(t), 0.0);
    t.samples.assign(1000, 0.4);  // below baseline clamps
    EXPECT_EQ(trace_to_energy(t), 0.0);
}

TEST(Trace, RecoversInjectedEnergy) {
    // Generator: known per-run energy spread over a pulse, plus measurement noise.
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const double v = 4.2, dt = 200e-6, base = 0.35;
        const std::size_t runs = 1000, per_run = 40;
        const double truth_mj = 5.0 + 20.0 * uniform01(rng);
        const double amp = truth_mj * 1e-3 / (v * dt * double(per_run));
        PowerTrace t{v, dt, {}, base, runs};
        for (std::size_t r = 0; r < runs; ++r) {
            for (int i = 0; i < 10; ++i) t.samples.push_back(base);
            for (std::size_t i = 0; i < per_run; ++i)
                t.samples.push_back(base + amp * (1.0 + 0.02 * normal_from_bits(rng(), rng())));
        }
        EXPECT_NEAR(trace_to_energy(t), truth_mj, 0.005 * truth_mj);
    }
}

TEST(Trace, Errors) {
    PowerTrace t{4.2, 200e-6, {}, 0.0, 1};
    EXPECT_THROW(trace_to_energy(t), EmptyTrace);
    t.samples = {1.0};
    t.run_count = 0;
    EXPECT_THROW(trace_to_energy(t), ConfigViolation);
}

TEST(Trace, FileRoundTrip) {
    PowerTrace t{4.2, 200e-6, {0.5, 0.75, 1.25}, 0.25, 3};
    std::stringstream ss;
    write_power_trace(ss, t);
    const auto back = read_power_trace(ss);
    EXPECT_EQ(back.voltage, t.voltage);
    EXPECT_EQ(back.sample_interval, t.sample_interval);
    EXPECT_EQ(back.samples, t.samples);
    EXPECT_EQ(back.baseline_current, t.baseline_current);
    EXPECT_EQ(back.run_count, t.run_count);
    std::istringstream bad("chamnet-trace v1\nvoltage 4.2\n");
    EXPECT_THROW(read_power_trace(bad), MalformedRecord);
}
