#pragma once

// Desk-scale stand-ins for training runs and device measurements. None of
// these numbers are ImageNet accuracies or real device timings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "chamnet/error.hpp"
#include "chamnet/resource.hpp"
#include "chamnet/rng.hpp"
#include "chamnet/sampler.hpp"
#include "chamnet/space.hpp"

namespace chamnet {

/// Accuracy landscape: saturation * sigmoid(z) with z a weighted sum of
/// per-stage log-MAC ratios against the mid-range gene, plus a log-resolution
/// term and seeded per-gene Gaussian noise. stage_weights[0] weights the
/// resolution term; stage_weights[1 + s] weights schema stage s.
class SyntheticAccuracyOracle final : public EvalOracle {
public:
    SyntheticAccuracyOracle(SearchSpace space, std::uint64_t seed = 0, double noise_sd = 0.0,
                            double saturation = 0.8, std::vector<double> stage_weights = {})
        : space_(std::move(space)), seed_(seed), noise_sd_(noise_sd), saturation_(saturation),
          weights_(std::move(stage_weights)) {
        const std::size_t n = space_.stages().size();
        if (weights_.empty()) weights_ = default_weights(space_);
        if (weights_.size() != n + 1)
            throw ConfigViolation("stage_weights needs one entry per stage plus one for the resolution");
        const Gene ref = midpoint_gene(space_);
        ref_log_macs_.resize(n);
        const auto macs = stage_flops(space_, ref);
        for (std::size_t s = 0; s < n; ++s) ref_log_macs_[s] = std::log(double(std::max<std::uint64_t>(macs[s], 1)));
        ref_log_res_ = std::log(double(space_.resolution_value(ref)));
    }

    /// Gene at the middle level of every range.
    static Gene midpoint_gene(const SearchSpace& space) {
        Gene g;
        for (const GeneBound& b : space.bounds()) g.values.push_back(b.value_at(b.levels() / 2));
        return g;
    }

    static std::vector<double> default_weights(const SearchSpace& space) {
        std::vector<double> w(space.stages().size() + 1, 0.0);
        std::size_t searchable = 0;
        for (const StageDef& st : space.stages())
            if (st.op_kind != OpKind::avgpool && st.op_kind != OpKind::fc) ++searchable;
        w[0] = 0.8;
        for (std::size_t s = 0; s < space.stages().size(); ++s) {
            const OpKind k = space.stages()[s].op_kind;
            if (k != OpKind::avgpool && k != OpKind::fc) w[s + 1] = 1.6 / double(searchable);
        }
        return w;
    }

    double evaluate(const Gene& gene) const override { return accuracy(gene); }

    double accuracy(const Gene& gene) const {
        const auto macs = stage_flops(space_, gene);
        double z = weights_[0] * (std::log(double(space_.resolution_value(gene))) - ref_log_res_);
        for (std::size_t s = 0; s < macs.size(); ++s)
            z += weights_[s + 1] * (std::log(double(std::max<std::uint64_t>(macs[s], 1))) - ref_log_macs_[s]);
        double a = saturation_ / (1.0 + std::exp(-z));
        if (noise_sd_ > 0.0) {
            const std::uint64_t h = derive_seed(seed_, GeneHash{}(gene));
            a += noise_sd_ * normal_from_bits(splitmix64(h), splitmix64(h ^ 0xa5a5a5a5a5a5a5a5ULL));
        }
        return std::clamp(a, 0.0, 1.0);
    }

    const SearchSpace& space() const { return space_; }
    double saturation() const { return saturation_; }
    const std::vector<double>& stage_weights() const { return weights_; }

private:
    SearchSpace space_;
    std::uint64_t seed_;
    double noise_sd_;
    double saturation_;
    std::vector<double> weights_;
    std::vector<double> ref_log_macs_;
    double ref_log_res_ = 0.0;
};

enum class DeviceProfile { cpu_like, dsp_like };

/// Operator-additive latency model. Throughputs are in MACs per microsecond.
/// The DSP profile pads every channel count up to `channel_quantum`, which
/// produces a staircase in latency that MAC counts do not show.
struct SyntheticDevice {
    DeviceProfile profile = DeviceProfile::cpu_like;
    std::string platform = "synthetic-cpu";
    double conv_rate = 12000.0;
    double depthwise_rate = 2500.0;
    double fc_rate = 4000.0;
    double pool_rate = 4000.0;
    double overhead_us = 5.0;          // per primitive op
    double spatial_slowdown = 0.25;    // extra cost per doubling of area above 28x28
    int channel_quantum = 1;

    static SyntheticDevice cpu_like() { return {}; }

    static SyntheticDevice dsp_like() {
        SyntheticDevice d;
        d.profile = DeviceProfile::dsp_like;
        d.platform = "synthetic-dsp";
        d.conv_rate = 30000.0;
        d.depthwise_rate = 6000.0;
        d.fc_rate = 8000.0;
        d.pool_rate = 8000.0;
        d.overhead_us = 8.0;
        d.spatial_slowdown = 0.0;
        d.channel_quantum = 32;
        return d;
    }

    static SyntheticDevice from_name(std::string_view name) {
        if (name == "cpu_like" || name == "synthetic-cpu") return cpu_like();
        if (name == "dsp_like" || name == "synthetic-dsp") return dsp_like();
        throw ConfigViolation("unknown synthetic device '" + std::string(name) + "' (cpu_like, dsp_like)");
    }

    double quantize(int c) const {
        const int q = std::max(channel_quantum, 1);
        return double((c + q - 1) / q * q);
    }

    double slowdown(int h, int w) const {
        const double area = double(h) * double(w);
        return 1.0 + spatial_slowdown * std::max(0.0, std::log2(area / 784.0));
    }

    /// Latency of one operator in whole microseconds (>= 1).
    /// Unrounded latency in microseconds.
    double op_latency_exact_us(const OperatorKey& k) const {
        const int out_h = ceil_div(k.in_h, k.stride), out_w = ceil_div(k.in_w, k.stride);
        const double in_hw = double(k.in_h) * k.in_w, out_hw = double(out_h) * out_w;
        const double cin = quantize(k.in_c), cout = quantize(k.out_c), mid = quantize(mid_channels(k));
        const double kk = double(k.kernel) * k.kernel;
        const double s_in = slowdown(k.in_h, k.in_w), s_out = slowdown(out_h, out_w);
        double us = 0.0;
        auto prim = [&](double macs, double rate, double slow) { us += macs / rate * slow + overhead_us; };
        switch (k.kind) {
            case OpKind::conv2d:
                prim(out_hw * cin * cout * kk, conv_rate, s_in);
                break;
            case OpKind::inverted_bottleneck:
                if (k.expansion != 1) prim(in_hw * cin * mid, conv_rate, s_in);
                prim(out_hw * mid * kk, depthwise_rate, s_in);
                prim(out_hw * mid * cout, conv_rate, s_out);
                break;
            case OpKind::residual_bottleneck:
                prim(in_hw * cin * mid, conv_rate, s_in);
                prim(out_hw * mid * mid * kk, conv_rate, s_in);
                prim(out_hw * mid * cout, conv_rate, s_out);
                if (k.stride != 1 || k.in_c != k.out_c) prim(out_hw * cin * cout, conv_rate, s_in);
                break;
            case OpKind::avgpool:
                prim(in_hw * cin, pool_rate, 1.0);
                break;
            case OpKind::fc:
                prim(cin * cout, fc_rate, 1.0);
                break;
        }
        return us;
    }

    /// LUT value: the exact latency rounded up to whole microseconds, at least 1.
    std::int64_t op_latency_us(const OperatorKey& k) const {
        return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(op_latency_exact_us(k))));
    }

    /// Whole-network latency measured directly on the simulator.
    std::int64_t network_latency_us(const ArchitectureDescription& arch) const {
        std::int64_t total = 0;
        for (const Layer& l : arch) total += op_latency_us(key_of(l));
        return total;
    }
};

inline std::int64_t synth_op_latency(const SyntheticDevice& device, const OperatorKey& key) {
    return device.op_latency_us(key);
}

/// One record per operator key reachable from any gene of `space`, sorted by key.
inline std::vector<LatencyRecord> generate_lut(const SyntheticDevice& device, const SearchSpace& space) {
    std::vector<LatencyRecord> out;
    if (space.empty()) return out;
    auto grid = [](const std::optional<HyperparamDef>& d) {
        std::vector<int> v;
        if (!d) return std::vector<int>{1};
        for (int i = 0; i < d->levels(); ++i) v.push_back(d->value_at(i));
        return v;
    };
    std::set<std::pair<int, int>> states;  // (spatial size, channels) entering a stage
    for (int i = 0; i < space.resolution().levels(); ++i)
        states.insert({space.resolution().value_at(i), space.input_channels()});

    std::set<OperatorKey> keys;
    for (const StageDef& st : space.stages()) {
        std::set<std::pair<int, int>> next;
        switch (st.op_kind) {
            case OpKind::conv2d:
                for (auto [h, c] : states)
                    for (int oc : grid(st.channels)) {
                        keys.insert({OpKind::conv2d, h, h, c, oc, st.stride, st.kernel, 1});
                        next.insert({ceil_div(h, st.stride), oc});
                    }
                break;
            case OpKind::inverted_bottleneck:
            case OpKind::residual_bottleneck: {
                const bool inverted = st.op_kind == OpKind::inverted_bottleneck;
                const bool repeats = st.repeats && st.repeats->upper >= 2;
                for (auto [h, c] : states)
                    for (int t : grid(st.expansion))
                        for (int w : grid(st.channels)) {
                            const int oc = inverted ? w : w * t;
                            const int h1 = ceil_div(h, st.stride);
                            keys.insert({st.op_kind, h, h, c, oc, st.stride, st.kernel, t});
                            if (repeats) keys.insert({st.op_kind, h1, h1, oc, oc, 1, st.kernel, t});
                            next.insert({h1, oc});
                        }
                break;
            }
            case OpKind::avgpool:
                for (auto [h, c] : states) {
                    keys.insert({OpKind::avgpool, h, h, c, c, 1, h, 1});
                    next.insert({1, c});
                }
                break;
            case OpKind::fc:
                for (auto [h, c] : states) {
                    keys.insert({OpKind::fc, 1, 1, c, st.channels->default_value, 1, 1, 1});
                    next.insert({1, st.channels->default_value});
                }
                break;
        }
        states = std::move(next);
    }
    out.reserve(keys.size());
    for (const OperatorKey& k : keys) out.push_back({k, device.op_latency_us(k)});
    return out;
}

/// Energy landscape in mJ: active power times simulated latency plus a
/// per-element activation traffic term.
class SyntheticEnergyOracle final : public EvalOracle {
public:
    SyntheticEnergyOracle(SearchSpace space, SyntheticDevice device, double active_power_w = 1.5,
                          double mj_per_mega_elements = 1.0, std::uint64_t seed = 0, double noise_sd = 0.0)
        : space_(std::move(space)), device_(std::move(device)), power_w_(active_power_w),
          traffic_(mj_per_mega_elements), seed_(seed), noise_sd_(noise_sd) {}

    double evaluate(const Gene& gene) const override {
        const auto arch = decode(space_, gene);
        const double ms = double(device_.network_latency_us(arch)) / 1000.0;
        double elems = 0.0;
        for (const Layer& l : arch)
            elems += double(l.in_h) * l.in_w * l.in_c + double(l.out_h) * l.out_w * l.out_c;
        double e = power_w_ * ms + traffic_ * elems * 1e-6;
        if (noise_sd_ > 0.0) {
            const std::uint64_t h = derive_seed(seed_, GeneHash{}(gene));
            e += noise_sd_ * normal_from_bits(splitmix64(h), splitmix64(~h));
        }
        return std::max(0.0, e);
    }

private:
    SearchSpace space_;
    SyntheticDevice device_;
    double power_w_;
    double traffic_;
    std::uint64_t seed_;
    double noise_sd_;
};

/// Replays measured values from an observation log.
class MeasurementFileOracle final : public EvalOracle {
public:
    explicit MeasurementFileOracle(const ObservationLog& log) : values_(to_value_map(log.records)) {}

    double evaluate(const Gene& gene) const override {
        const auto it = values_.find(gene);
        if (it == values_.end()) throw OracleFailure("no measurement recorded for gene [" + to_string(gene) + "]");
        return it->second;
    }

    std::size_t size() const { return values_.size(); }

private:
    GeneValueMap values_;
};

/// Runs `command g0 g1 ...` through the shell and parses the last line of
/// its standard output as the value.
class ExternalCommandOracle final : public EvalOracle {
public:
    explicit ExternalCommandOracle(std::string command) : command_(std::move(command)) {}

    double evaluate(const Gene& gene) const override {
        std::string cmd = command_;
        for (int v : gene.values) cmd += " " + std::to_string(v);
        std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
        if (!pipe) throw OracleFailure("could not start '" + cmd + "'");
        std::string output;
        char buf[512];
        while (std::fgets(buf, sizeof buf, pipe.get())) output += buf;
        const int status = pclose(pipe.release());
        if (status == -1 || !WIFEXITED(status))
            throw OracleFailure("'" + cmd + "' did not exit normally");
        if (WEXITSTATUS(status) != 0)
            throw OracleFailure("'" + cmd + "' exited with status " + std::to_string(WEXITSTATUS(status)));
        auto t = detail::trim(output);
        while (!t.empty() && t.back() == '\n') t = detail::trim(t.substr(0, t.size() - 1));
        const auto nl = t.rfind('\n');
        const std::string last(detail::trim(nl == std::string_view::npos ? t : t.substr(nl + 1)));
        char* end = nullptr;
        const double v = std::strtod(last.c_str(), &end);
        if (last.empty() || end != last.c_str() + last.size())
            throw OracleFailure("'" + cmd + "' printed '" + last + "', expected a number");
        return v;
    }

private:
    std::string command_;
};

}  // namespace chamnet
