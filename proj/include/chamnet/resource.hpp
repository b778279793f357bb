#pragma once

// Resource predictors: an operator latency lookup table whose network
// latency is the sum of its operator latencies, a GP energy predictor built
// with exploration-only sampling, and power-trace post-processing.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "chamnet/error.hpp"
#include "chamnet/gp.hpp"
#include "chamnet/sampler.hpp"
#include "chamnet/space.hpp"

namespace chamnet {

/// Canonical description of one benchmarked operator.
struct OperatorKey {
    OpKind kind = OpKind::conv2d;
    int in_h = 1, in_w = 1;
    int in_c = 1, out_c = 1;
    int stride = 1;
    int kernel = 1;
    int expansion = 1;

    auto operator<=>(const OperatorKey&) const = default;
};

struct OperatorKeyHash {
    std::size_t operator()(const OperatorKey& k) const noexcept {
        std::uint64_t h = 1469598103934665603ULL;
        for (int v : {static_cast<int>(k.kind), k.in_h, k.in_w, k.in_c, k.out_c, k.stride, k.kernel, k.expansion}) {
            h ^= static_cast<std::uint32_t>(v);
            h *= 1099511628211ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

inline OperatorKey key_of(const Layer& l) {
    return {l.kind, l.in_h, l.in_w, l.in_c, l.out_c, l.stride, l.kernel, l.expansion};
}

inline std::string to_string(const OperatorKey& k) {
    return std::string(to_string(k.kind)) + "," + std::to_string(k.in_h) + "," + std::to_string(k.in_w) + "," +
           std::to_string(k.in_c) + "," + std::to_string(k.out_c) + "," + std::to_string(k.stride) + "," +
           std::to_string(k.kernel) + "," + std::to_string(k.expansion);
}

/// Inner width implied by a key (0 for non-bottleneck operators).
inline int mid_channels(const OperatorKey& k) {
    if (k.kind == OpKind::inverted_bottleneck) return k.in_c * k.expansion;
    if (k.kind == OpKind::residual_bottleneck) return k.out_c / k.expansion;
    return 0;
}

struct LatencyRecord {
    OperatorKey key;
    std::int64_t latency_us = 0;
};

struct LutQueryOptions {
    /// Fill misses from records that differ only in (in_c, out_c).
    bool interpolate = false;
};

class LatencyLUT {
public:
    LatencyLUT() = default;

    /// Builds from raw records; duplicate keys take the rounded mean.
    LatencyLUT(std::string platform, const std::vector<LatencyRecord>& records) : platform_(std::move(platform)) {
        std::unordered_map<OperatorKey, std::pair<std::int64_t, std::int64_t>, OperatorKeyHash> acc;
        acc.reserve(records.size());
        for (const LatencyRecord& r : records) {
            if (r.latency_us <= 0) throw Error("latency for " + to_string(r.key) + " must be positive");
            auto& [sum, n] = acc[r.key];
            sum += r.latency_us;
            ++n;
        }
        table_.reserve(acc.size());
        for (const auto& [key, sn] : acc) table_.emplace(key, (sn.first + sn.second / 2) / sn.second);
        index_groups();
    }

    const std::string& platform() const { return platform_; }
    std::size_t record_count() const { return table_.size(); }

    std::optional<std::int64_t> find(const OperatorKey& key) const {
        const auto it = table_.find(key);
        if (it == table_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<std::int64_t> lookup(const OperatorKey& key, const LutQueryOptions& opts = {}) const {
        if (auto hit = find(key)) return hit;
        if (!opts.interpolate) return std::nullopt;
        return interpolate(key);
    }

    /// Records sorted by key.
    std::vector<LatencyRecord> records() const {
        std::vector<LatencyRecord> out;
        out.reserve(table_.size());
        for (const auto& [k, v] : table_) out.push_back({k, v});
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
        return out;
    }

private:
    using GroupKey = std::tuple<OpKind, int, int, int, int, int>;  // kind, h, w, stride, kernel, t

    static GroupKey group_of(const OperatorKey& k) {
        return {k.kind, k.in_h, k.in_w, k.stride, k.kernel, k.expansion};
    }

    void index_groups() {
        groups_.clear();
        for (const auto& [k, v] : table_) groups_[group_of(k)].push_back({k.in_c, k.out_c, v});
        for (auto& [g, pts] : groups_) std::sort(pts.begin(), pts.end());
    }

    // Bilinear in (in_c, out_c) when the four bracketing records exist,
    // otherwise the nearest record in channel space.
    std::optional<std::int64_t> interpolate(const OperatorKey& key) const {
        const auto git = groups_.find(group_of(key));
        if (git == groups_.end()) return std::nullopt;
        const auto& pts = git->second;
        std::vector<int> ins, outs;
        for (const auto& p : pts) {
            ins.push_back(std::get<0>(p));
            outs.push_back(std::get<1>(p));
        }
        std::sort(ins.begin(), ins.end());
        ins.erase(std::unique(ins.begin(), ins.end()), ins.end());
        std::sort(outs.begin(), outs.end());
        outs.erase(std::unique(outs.begin(), outs.end()), outs.end());
        auto bracket = [](const std::vector<int>& axis, int v) -> std::optional<std::pair<int, int>> {
            auto hi = std::lower_bound(axis.begin(), axis.end(), v);
            if (hi == axis.end()) return std::nullopt;
            if (*hi == v) return std::pair{v, v};
            if (hi == axis.begin()) return std::nullopt;
            return std::pair{*(hi - 1), *hi};
        };
        auto at = [&](int ic, int oc) -> std::optional<double> {
            OperatorKey k = key;
            k.in_c = ic;
            k.out_c = oc;
            if (auto v = find(k)) return double(*v);
            return std::nullopt;
        };
        const auto bi = bracket(ins, key.in_c);
        const auto bo = bracket(outs, key.out_c);
        if (bi && bo) {
            const auto v00 = at(bi->first, bo->first), v01 = at(bi->first, bo->second);
            const auto v10 = at(bi->second, bo->first), v11 = at(bi->second, bo->second);
            if (v00 && v01 && v10 && v11) {
                const double ti = bi->second == bi->first ? 0.0
                                                          : double(key.in_c - bi->first) / (bi->second - bi->first);
                const double to = bo->second == bo->first ? 0.0
                                                          : double(key.out_c - bo->first) / (bo->second - bo->first);
                const double v = (1 - ti) * ((1 - to) * *v00 + to * *v01) + ti * ((1 - to) * *v10 + to * *v11);
                return std::max<std::int64_t>(1, std::llround(v));
            }
        }
        double best = std::numeric_limits<double>::infinity();
        std::int64_t best_v = 0;
        for (const auto& [ic, oc, v] : pts) {
            const double d = std::hypot(double(ic - key.in_c), double(oc - key.out_c));
            if (d < best) {
                best = d;
                best_v = v;
            }
        }
        return best_v;
    }

    std::string platform_;
    std::unordered_map<OperatorKey, std::int64_t, OperatorKeyHash> table_;
    std::map<GroupKey, std::vector<std::tuple<int, int, std::int64_t>>> groups_;
};

// ---------------------------------------------------------------------------
// LUT file:
//   chamnet-lut v1 platform=<id>
//   op_kind,input_h,input_w,in_channels,out_channels,stride,kernel,expansion,latency_us
//   ...

inline constexpr std::string_view kLutColumns =
    "op_kind,input_h,input_w,in_channels,out_channels,stride,kernel,expansion,latency_us";

inline void write_lut(std::ostream& os, const LatencyLUT& lut) {
    os << "chamnet-lut v1 platform=" << lut.platform() << "\n" << kLutColumns << "\n";
    std::string line;
    for (const LatencyRecord& r : lut.records()) {
        line = to_string(r.key);
        line += ',';
        line += std::to_string(r.latency_us);
        line += '\n';
        os << line;
    }
}

inline LatencyLUT read_lut(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw MalformedRecord(1, "empty LUT file");
    const std::string_view prefix = "chamnet-lut v1 platform=";
    if (line.rfind(prefix, 0) != 0) throw MalformedRecord(1, "expected 'chamnet-lut v1 platform=<id>'");
    std::string platform = std::string(detail::trim(std::string_view(line).substr(prefix.size())));
    if (platform.empty()) throw MalformedRecord(1, "missing platform id");
    std::size_t line_no = 1;
    std::vector<LatencyRecord> records;
    while (std::getline(is, line)) {
        ++line_no;
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        if (line_no == 2 && t == kLutColumns) continue;
        std::string_view cols[9];
        std::size_t n = 0, pos = 0;
        while (n < 9) {
            const auto comma = t.find(',', pos);
            cols[n++] = t.substr(pos, comma == std::string_view::npos ? t.size() - pos : comma - pos);
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
            if (n == 9) throw MalformedRecord(line_no, "too many fields");
        }
        if (n != 9) throw MalformedRecord(line_no, "expected 9 comma-separated fields");
        const auto kind = op_kind_from_string(cols[0]);
        if (!kind) throw MalformedRecord(line_no, "unknown op_kind '" + std::string(cols[0]) + "'");
        int v[7];
        for (int i = 0; i < 7; ++i) {
            const auto x = detail::parse_int(cols[i + 1]);
            if (!x || *x <= 0) throw MalformedRecord(line_no, "field " + std::to_string(i + 2) + " must be a positive integer");
            v[i] = *x;
        }
        std::int64_t us = 0;
        const auto last = cols[8];
        const auto [p, ec] = std::from_chars(last.data(), last.data() + last.size(), us);
        if (ec != std::errc{} || p != last.data() + last.size() || us <= 0)
            throw MalformedRecord(line_no, "latency_us must be a positive integer");
        records.push_back({{*kind, v[0], v[1], v[2], v[3], v[4], v[5], v[6]}, us});
    }
    return LatencyLUT(std::move(platform), records);
}

/// Network latency in integer microseconds: the sum over decoded operators.
/// Throws MissingOperator listing every absent key.
inline std::int64_t predict_latency_us(const LatencyLUT& lut, const ArchitectureDescription& arch,
                                       const LutQueryOptions& opts = {}) {
    std::int64_t total = 0;
    std::vector<std::string> missing;
    for (const Layer& l : arch) {
        const OperatorKey k = key_of(l);
        if (auto v = lut.lookup(k, opts))
            total += *v;
        else if (std::find(missing.begin(), missing.end(), to_string(k)) == missing.end())
            missing.push_back(to_string(k));
    }
    if (!missing.empty()) {
        std::string msg = std::to_string(missing.size()) + " operator(s) missing from LUT '" + lut.platform() + "':";
        for (const auto& m : missing) msg += "\n  " + m;
        throw MissingOperator(msg);
    }
    return total;
}

/// Network latency in milliseconds.
inline double predict_latency(const LatencyLUT& lut, const ArchitectureDescription& arch,
                              const LutQueryOptions& opts = {}) {
    return static_cast<double>(predict_latency_us(lut, arch, opts)) / 1000.0;
}

// ---------------------------------------------------------------------------
// Energy

class EnergyModel {
public:
    EnergyModel() = default;
    EnergyModel(std::string platform, GenePredictor gp) : platform_(std::move(platform)), gp_(std::move(gp)) {}

    /// Predicted energy per inference in mJ, clamped at zero.
    double predict_mj(const Gene& gene) const { return std::max(0.0, gp_.predict(gene).mean); }

    const std::string& platform() const { return platform_; }
    const GenePredictor& predictor() const { return gp_; }

private:
    std::string platform_;
    GenePredictor gp_;
};

struct EnergyBuild {
    EnergyModel model;
    PredictorBuild build;
};

/// Same loop as the accuracy predictor with exploitation disabled.
inline EnergyBuild build_energy_predictor(const SearchSpace& space, const EvalOracle& oracle, const SamplerConfig& cfg,
                                          std::string platform = "device", const BuildHooks& hooks = {}) {
    if (cfg.exploit_count != 0)
        throw ConfigViolation("energy predictors use exploration samples only; exploit_count must be 0");
    PredictorBuild b = build_predictor(space, oracle, cfg, hooks);
    EnergyModel m(std::move(platform), b.predictor);
    return {std::move(m), std::move(b)};
}

// ---------------------------------------------------------------------------
// Power traces

struct PowerTrace {
    double voltage = 0.0;          // V
    double sample_interval = 0.0;  // s
    std::vector<double> samples;   // A
    double baseline_current = 0.0; // A
    std::size_t run_count = 1;
};

/// Energy per inference in mJ: V * sum(max(i - baseline, 0)) * dt / runs.
inline double trace_to_energy(const PowerTrace& trace) {
    if (trace.samples.empty()) throw EmptyTrace("power trace has no samples");
    if (trace.run_count < 1) throw ConfigViolation("power trace run_count must be >= 1");
    if (!(trace.sample_interval > 0.0)) throw ConfigViolation("power trace sample interval must be positive");
    long double excess = 0.0L;
    for (double i : trace.samples) excess += std::max(0.0L, static_cast<long double>(i) - trace.baseline_current);
    const long double joules = static_cast<long double>(trace.voltage) * excess * trace.sample_interval;
    return static_cast<double>(joules * 1000.0L / static_cast<long double>(trace.run_count));
}

// Trace file:
//   chamnet-trace v1
//   voltage 4.2
//   interval 0.0002
//   baseline 0.35
//   runs 1000
//   <one current sample in amperes per line>

inline void write_power_trace(std::ostream& os, const PowerTrace& t) {
    char buf[64];
    os << "chamnet-trace v1\n";
    std::snprintf(buf, sizeof buf, "%.17g", t.voltage);
    os << "voltage " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", t.sample_interval);
    os << "interval " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", t.baseline_current);
    os << "baseline " << buf << "\n";
    os << "runs " << t.run_count << "\n";
    for (double s : t.samples) {
        std::snprintf(buf, sizeof buf, "%.17g", s);
        os << buf << "\n";
    }
}

inline PowerTrace read_power_trace(std::istream& is) {
    PowerTrace t;
    std::string line;
    std::size_t line_no = 0;
    auto number = [&](std::string_view s) {
        const std::string str(detail::trim(s));
        char* end = nullptr;
        const double v = std::strtod(str.c_str(), &end);
        if (str.empty() || end != str.c_str() + str.size() || !std::isfinite(v))
            throw MalformedRecord(line_no, "bad number '" + str + "'");
        return v;
    };
    if (!std::getline(is, line) || detail::trim(line) != "chamnet-trace v1")
        throw MalformedRecord(1, "not a chamnet-trace v1 file");
    ++line_no;
    bool seen[4] = {false, false, false, false};
    while (std::getline(is, line)) {
        ++line_no;
        const auto s = detail::trim(line);
        if (s.empty() || s.front() == '#') continue;
        const auto sp = s.find(' ');
        const auto key = s.substr(0, sp);
        if (key == "voltage") { t.voltage = number(s.substr(sp)); seen[0] = true; }
        else if (key == "interval") { t.sample_interval = number(s.substr(sp)); seen[1] = true; }
        else if (key == "baseline") { t.baseline_current = number(s.substr(sp)); seen[2] = true; }
        else if (key == "runs") {
            const auto r = detail::parse_int(s.substr(sp));
            if (!r || *r < 1) throw MalformedRecord(line_no, "runs must be a positive integer");
            t.run_count = static_cast<std::size_t>(*r);
            seen[3] = true;
        } else {
            t.samples.push_back(number(s));
        }
    }
    for (bool b : seen)
        if (!b) throw MalformedRecord(line_no, "trace header needs voltage, interval, baseline and runs");
    return t;
}

}  // namespace chamnet
