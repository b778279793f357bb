// chamnet: command-line front end for the adaptation pipeline.
//
//   pool          write a QMC pool of genes
//   build-acc     build a GP accuracy predictor (writes the observation log)
//   build-lut     build an operator latency LUT (synthetic device or records file)
//   build-energy  build a GP energy predictor (exploration only)
//   search        constrained evolutionary search
//   sweep         search across a list of thresholds
//   eval          score one gene against the predictors
//   trace-energy  per-inference energy from a power trace
//   rerun         repeat a run from its manifest
//
// Every run writes manifest.ini into --out; the manifest is itself a valid
// --config file.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include "chamnet/chamnet.hpp"

namespace fs = std::filesystem;
using namespace chamnet;

namespace {

constexpr const char* kVersion = "0.1.0";

enum ExitCode { ok = 0, internal = 1, usage = 2, data = 3, oracle_failed = 4 };

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what, ErrorClass::data) {}
};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    return is;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    return os;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, sep)) {
        const auto t = detail::trim(cur);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

// Units are mandatory so a latency budget can never be read as energy.
ResourceKind unit_kind(std::string_view unit, std::string_view what) {
    if (unit == "ms") return ResourceKind::latency;
    if (unit == "mJ" || unit == "mj") return ResourceKind::energy;
    throw ConfigViolation(std::string(what) + " needs a unit of ms or mJ, got '" + std::string(unit) + "'");
}

std::pair<double, ResourceKind> parse_quantity(const std::string& text, bool per_unit, std::string_view what) {
    const auto t = std::string(detail::trim(text));
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &pos);
    } catch (const std::exception&) {
        throw ConfigViolation(std::string(what) + ": expected a number with a unit, got '" + t + "'");
    }
    std::string_view unit = std::string_view(t).substr(pos);
    if (per_unit) {
        if (unit.empty() || unit.front() != '/')
            throw ConfigViolation(std::string(what) + " must be written per unit, e.g. 10/ms, got '" + t + "'");
        unit.remove_prefix(1);
    }
    return {v, unit_kind(unit, what)};
}

struct Globals {
    std::string space = "chamnet-mobile";
    int channel_step = 8;
    std::uint64_t seed = 0;
    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    std::string out;
    bool force = false;
};

SearchSpace load_space(const Globals& g) {
    if (g.channel_step < 1) throw ConfigViolation("--channel-step must be >= 1");
    SearchSpace sp;
    if (auto schema = builtin_schema(g.space)) {
        sp = parse_space(*schema);
    } else {
        auto is = open_in(g.space);
        std::stringstream ss;
        ss << is.rdbuf();
        sp = parse_space(ss.str());
    }
    return g.channel_step == 1 ? sp : sp.with_channel_step(g.channel_step);
}

struct FitnessOpts {
    std::string thres = "20ms";
    std::string alpha = "10/ms";
    double w = 2.0;
    std::string penalty = "ramp";

    FitnessParams params(const std::string& thres_text, ResourceKind expected) const {
        FitnessParams p;
        auto [t, tk] = parse_quantity(thres_text, false, "thres");
        auto [a, ak] = parse_quantity(alpha, true, "alpha");
        if (tk != ak) throw ConfigViolation("alpha and thres use different units");
        if (tk != expected)
            throw ConfigViolation(std::string("thres is in ") + std::string(unit_of(tk)) + " but the resource predictor gives " +
                                  std::string(unit_of(expected)));
        p.thres = t;
        p.alpha = a;
        p.w = w;
        p.resource_kind = tk;
        if (penalty == "ramp") p.penalty_mode = PenaltyMode::ramp;
        else if (penalty == "step") p.penalty_mode = PenaltyMode::step;
        else throw ConfigViolation("penalty must be ramp or step, got '" + penalty + "'");
        p.validate();
        return p;
    }
};

struct PredictorPaths {
    std::string acc, lut, energy;
};

void write_energy_model(std::ostream& os, const EnergyModel& m) {
    os << "chamnet-energy v1 platform=" << m.platform() << "\n";
    m.predictor().save(os);
}

EnergyModel read_energy_model(std::istream& is) {
    std::string line;
    const std::string prefix = "chamnet-energy v1 platform=";
    if (!std::getline(is, line) || line.rfind(prefix, 0) != 0) throw MalformedRecord(1, "not a chamnet-energy v1 model");
    return EnergyModel(line.substr(prefix.size()), GenePredictor::load(is));
}

// Loaded predictors for search, sweep and eval.
struct Predictors {
    GenePredictor acc;
    std::optional<LatencyLUT> lut;
    std::optional<EnergyModel> energy;

    ResourceKind kind() const { return lut ? ResourceKind::latency : ResourceKind::energy; }

    static Predictors load(const SearchSpace& space, const PredictorPaths& p) {
        if (p.acc.empty()) throw ConfigViolation("--acc is required");
        if (p.lut.empty() == p.energy.empty()) throw ConfigViolation("give exactly one of --lut and --energy");
        Predictors out;
        {
            auto is = open_in(p.acc);
            out.acc = GenePredictor::load(is);
            out.acc.check_space(space);
        }
        if (!p.lut.empty()) {
            auto is = open_in(p.lut);
            out.lut = read_lut(is);
        } else {
            auto is = open_in(p.energy);
            out.energy = read_energy_model(is);
            out.energy->predictor().check_space(space);
        }
        return out;
    }

    template <class Fn>
    decltype(auto) with(const SearchSpace& space, Fn&& fn) const {
        const GpAccuracy a{&acc};
        if (lut) return fn(a, LutLatency{&space, &*lut, {}});
        return fn(a, GpEnergy{&*energy});
    }
};

std::unique_ptr<EvalOracle> make_oracle(const std::string& spec, const SearchSpace& space, bool energy,
                                        std::uint64_t oracle_seed, double noise, const std::string& device) {
    if (spec == "synthetic") {
        if (energy)
            return std::make_unique<SyntheticEnergyOracle>(space, SyntheticDevice::from_name(device), 1.5, 1.0,
                                                           oracle_seed, noise);
        return std::make_unique<SyntheticAccuracyOracle>(space, oracle_seed, noise);
    }
    if (spec.rfind("file:", 0) == 0) {
        auto is = open_in(spec.substr(5));
        return std::make_unique<MeasurementFileOracle>(read_observation_log(is));
    }
    if (spec.rfind("cmd:", 0) == 0) return std::make_unique<ExternalCommandOracle>(spec.substr(4));
    throw ConfigViolation("oracle must be synthetic, file:PATH or cmd:COMMAND, got '" + spec + "'");
}

struct SamplerOpts {
    std::size_t pool_size = 2048, explore = 8, exploit = 8, max_samples = 240, initial = 48;
    double mse_threshold = 1e-4;
    bool center = false;
    std::string oracle = "synthetic";
    std::uint64_t oracle_seed = 0;
    double noise = 0.0;
    std::string device = "cpu_like";
    std::string resume;

    SamplerConfig config(const Globals& g) const {
        SamplerConfig c;
        c.pool_size = pool_size;
        c.explore_count = explore;
        c.exploit_count = exploit;
        c.mse_threshold = mse_threshold;
        c.max_total_samples = max_samples;
        c.initial_random = initial;
        c.seed = g.seed;
        c.threads = g.threads;
        c.gp.center_targets = center;
        c.validate();
        return c;
    }
};

struct Run {
    Globals g;
    FitnessOpts fit;
    PredictorPaths paths;
    SamplerOpts acc_sampler, energy_sampler;
    EESConfig ga;
    std::size_t pool_k = 2048;
    std::string lut_device, lut_records;
    std::string thres_list = "4ms,6ms,10ms,15ms,20ms,30ms";
    std::string gene;
    std::string trace;
    std::string manifest;
};

// Options holding file paths are written to the manifest as absolute paths
// so a rerun does not depend on the working directory.
const std::set<std::string> kPathOptions = {"--space", "--acc", "--lut", "--energy", "--records",
                                            "--resume", "--trace", "--oracle"};

std::string absolutize(const std::string& name, const std::string& value) {
    if (!kPathOptions.count(name) || value.empty()) return value;
    std::string prefix, path = value;
    if (name == "--oracle") {
        if (value.rfind("file:", 0) != 0) return value;
        prefix = "file:";
        path = value.substr(5);
    }
    if (name == "--space" && builtin_schema(value)) return value;
    std::error_code ec;
    const auto abs = fs::absolute(path, ec);
    return ec ? value : prefix + abs.lexically_normal().string();
}

std::string quote(const std::string& v) {
    if (v.find('"') == std::string::npos) return "\"" + v + "\"";
    return "'" + v + "'";
}

std::vector<std::pair<std::string, std::string>> settings_of(const CLI::App& app,
                                                              const std::set<std::string>& skip) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_name(false, true);
        if (name.empty() || name.rfind("--", 0) != 0 || skip.count(name)) continue;
        std::string value;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
        } else {
            value = opt->get_default_str();
        }
        out.emplace_back(name.substr(2), absolutize(name, value));
    }
    return out;
}

void write_manifest(const fs::path& dir, const CLI::App& app, const CLI::App& sub,
                    const std::vector<std::string>& outputs) {
    std::string body;
    for (const auto& [k, v] : settings_of(app, {"--help", "--config", "--out", "--force", "--version"}))
        body += k + " = " + quote(v) + "\n";
    body += "[" + sub.get_name() + "]\n";
    for (const auto& [k, v] : settings_of(sub, {"--help"})) body += k + " = " + quote(v) + "\n";

    char digest[32];
    std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(fnv1a64(body)));
    std::string out_list;
    for (const auto& o : outputs) out_list += (out_list.empty() ? "" : ",") + o;

    auto os = open_out(dir / "manifest.ini");
    os << "# chamnet run manifest; rerun with: chamnet rerun <this file> --out DIR\n";
    os << "command = " << quote(sub.get_name()) << "\n";
    os << "toolkit_version = " << quote(kVersion) << "\n";
    os << "config_digest = " << quote(std::string("fnv1a64:") + digest) << "\n";
    os << "output_dir = " << quote(fs::absolute(dir).lexically_normal().string()) << "\n";
    os << "outputs = " << quote(out_list) << "\n";
    os << body;
}

fs::path prepare_out(const Globals& g) {
    if (g.out.empty()) throw ConfigViolation("--out is required");
    const fs::path dir(g.out);
    if (fs::exists(dir / "manifest.ini") && !g.force)
        throw ConfigViolation("'" + g.out + "' already holds a run; pass --force to overwrite it");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + g.out + "': " + ec.message());
    return dir;
}

void write_pool(std::ostream& os, const SearchSpace& space, const std::vector<Gene>& pool) {
    os << "# chamnet-pool v1\n# space " << space.name() << " dims " << space.dims() << "\n";
    for (const Gene& g : pool) os << to_string(g) << "\n";
}

std::vector<std::string> cmd_pool(const Run& r, const fs::path& dir) {
    const auto space = load_space(r.g);
    const auto pool = qmc_pool(space, r.pool_k, r.g.seed);
    auto os = open_out(dir / "pool.txt");
    write_pool(os, space, pool);
    std::cout << "wrote " << pool.size() << " genes to " << (dir / "pool.txt").string() << "\n";
    return {"pool.txt"};
}

PredictorBuild run_build(const Run& r, const SamplerOpts& s, const SearchSpace& space, const fs::path& log_path,
                         bool energy, std::optional<EnergyModel>* energy_out) {
    const auto cfg = s.config(r.g);
    const auto oracle = make_oracle(s.oracle, space, energy, s.oracle_seed, s.noise, s.device);

    GeneValueMap known;
    if (!s.resume.empty()) {
        auto is = open_in(s.resume);
        const auto log = read_observation_log(is);
        if (log.dims && log.dims != space.dims())
            throw SpaceMismatch("resume log has " + std::to_string(log.dims) + " dims, space has " +
                                std::to_string(space.dims()));
        known = to_value_map(log.records);
    }

    auto log = open_out(log_path);
    write_observation_header(log, space.name(), space.dims());
    std::size_t seq = 0;
    BuildHooks hooks;
    hooks.known = s.resume.empty() ? nullptr : &known;
    hooks.on_observation = [&](const Observation& o) {
        write_observation(log, seq++, o);
        log.flush();
    };
    hooks.on_fit = [&](std::size_t round, const GenePredictor&) {
        std::cerr << "round " << round << ": " << seq << " observations\n";
    };
    if (energy) {
        auto b = build_energy_predictor(space, *oracle, cfg, s.oracle == "synthetic" ? s.device : s.oracle, hooks);
        *energy_out = std::move(b.model);
        return std::move(b.build);
    }
    return build_predictor(space, *oracle, cfg, hooks);
}

void report_build(const PredictorBuild& b) {
    std::cout << "observations " << b.observations.size() << "\n"
              << "oracle_calls " << b.oracle_calls << "\n"
              << "iterations " << b.iterations << "\n"
              << "gamma " << num(b.hyper.gamma) << "\n"
              << "noise_var " << num(b.hyper.noise_var) << "\n"
              << "loo_mse " << num(b.hyper.loo_mse) << "\n";
}

std::vector<std::string> cmd_build_acc(const Run& r, const fs::path& dir) {
    const auto space = load_space(r.g);
    const auto b = run_build(r, r.acc_sampler, space, dir / "observations.tsv", false, nullptr);
    auto os = open_out(dir / "accuracy.gp");
    b.predictor.save(os);
    report_build(b);
    return {"observations.tsv", "accuracy.gp"};
}

std::vector<std::string> cmd_build_energy(const Run& r, const fs::path& dir) {
    const auto space = load_space(r.g);
    std::optional<EnergyModel> model;
    const auto b = run_build(r, r.energy_sampler, space, dir / "observations.tsv", true, &model);
    auto os = open_out(dir / "energy.gp");
    write_energy_model(os, *model);
    report_build(b);
    return {"observations.tsv", "energy.gp"};
}

std::vector<std::string> cmd_build_lut(const Run& r, const fs::path& dir) {
    if (r.lut_device.empty() == r.lut_records.empty())
        throw ConfigViolation("give exactly one of --device and --records");
    std::optional<LatencyLUT> lut;
    if (!r.lut_device.empty()) {
        const auto dev = SyntheticDevice::from_name(r.lut_device);
        lut.emplace(dev.platform, generate_lut(dev, load_space(r.g)));
    } else {
        auto is = open_in(r.lut_records);
        lut.emplace(read_lut(is));
    }
    auto os = open_out(dir / "latency.lut");
    write_lut(os, *lut);
    std::cout << "records " << lut->record_count() << "\nplatform " << lut->platform() << "\n";
    return {"latency.lut"};
}

void write_result(std::ostream& os, const SearchSpace& space, const FitnessParams& p, const SearchResult& res) {
    const auto unit = unit_of(p.resource_kind);
    os << "# chamnet-search v1\n"
       << "space " << space.name() << "\n"
       << "resource_kind " << (p.resource_kind == ResourceKind::latency ? "latency" : "energy") << "\n"
       << "thres_" << unit << " " << num(p.thres) << "\n"
       << "best_gene " << to_string(res.best_gene) << "\n"
       << "accuracy " << num(res.best_fitness.accuracy) << "\n"
       << "resource_" << unit << " " << num(res.best_fitness.resource) << "\n"
       << "fitness " << num(res.best_fitness.fitness) << "\n"
       << "feasible " << (res.best_fitness.feasible ? 1 : 0) << "\n"
       << "flops " << flops(space, res.best_gene) << "\n"
       << "evaluations " << res.evaluations << "\n";
    for (const auto& w : res.warnings) os << "warning " << w << "\n";
}

void write_history(std::ostream& os, const SearchResult& res) {
    os << "generation\tbest_fitness\tmean_fitness\n";
    for (std::size_t i = 0; i < res.history.size(); ++i)
        os << i << '\t' << num(res.history[i].best) << '\t' << num(res.history[i].mean) << '\n';
}

EESConfig ga_config(const Run& r) {
    EESConfig c = r.ga;
    c.seed = r.g.seed;
    c.threads = r.g.threads;
    c.validate();
    return c;
}

std::vector<std::string> cmd_search(const Run& r, const fs::path& dir) {
    const auto space = load_space(r.g);
    const auto preds = Predictors::load(space, r.paths);
    const auto params = r.fit.params(r.fit.thres, preds.kind());
    const auto cfg = ga_config(r);
    const auto res = preds.with(space, [&](const auto& a, const auto& f) { return search(space, a, f, params, cfg); });
    auto os = open_out(dir / "result.txt");
    write_result(os, space, params, res);
    auto hs = open_out(dir / "history.tsv");
    write_history(hs, res);
    write_result(std::cout, space, params, res);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    return {"result.txt", "history.tsv"};
}

// Thresholds run in increasing order and each search is seeded with all
// earlier winners, so a looser budget can never return a worse accuracy.
std::vector<std::string> cmd_sweep(const Run& r, const fs::path& dir) {
    const auto space = load_space(r.g);
    const auto preds = Predictors::load(space, r.paths);
    const auto cfg = ga_config(r);
    std::vector<std::pair<double, std::string>> thres;
    for (const auto& t : split(r.thres_list, ',')) thres.emplace_back(parse_quantity(t, false, "thres").first, t);
    if (thres.empty()) throw ConfigViolation("--thres-list is empty");
    std::stable_sort(thres.begin(), thres.end());

    auto os = open_out(dir / "tradeoff.tsv");
    const auto unit = unit_of(preds.kind());
    os << "thres_" << unit << "\tbest_gene\taccuracy\tresource_" << unit << "\tfitness\tfeasible\tfeasible_seen\tflops\n";
    std::vector<Gene> winners;
    for (const auto& [value, text] : thres) {
        const auto params = r.fit.params(text, preds.kind());
        const auto res = preds.with(space, [&](const auto& a, const auto& f) {
            return search(space, a, f, params, cfg, std::span<const Gene>(winners));
        });
        if (std::find(winners.begin(), winners.end(), res.best_gene) == winners.end()) winners.push_back(res.best_gene);
        os << num(params.thres) << '\t' << to_string(res.best_gene) << '\t' << num(res.best_fitness.accuracy) << '\t'
           << num(res.best_fitness.resource) << '\t' << num(res.best_fitness.fitness) << '\t'
           << (res.best_fitness.feasible ? 1 : 0) << '\t' << (res.feasible_seen ? 1 : 0) << '\t'
           << flops(space, res.best_gene) << '\n';
        std::cout << text << ": accuracy " << num(res.best_fitness.accuracy) << ", " << unit << " "
                  << num(res.best_fitness.resource) << (res.best_fitness.feasible ? "" : " (infeasible)") << "\n";
        for (const auto& w : res.warnings) std::cerr << "warning at " << text << ": " << w << "\n";
    }
    return {"tradeoff.tsv"};
}

std::vector<std::string> cmd_eval(const Run& r, const fs::path& dir) {
    const auto start = std::chrono::steady_clock::now();
    const auto space = load_space(r.g);
    const auto preds = Predictors::load(space, r.paths);
    const auto params = r.fit.params(r.fit.thres, preds.kind());
    const Gene gene = parse_gene(r.gene);
    require_valid(space, gene);
    const auto pred = preds.acc.predict(gene);
    const auto fr = preds.with(space, [&](const auto& a, const auto& f) { return evaluate(gene, a, f, params); });
    const auto unit = unit_of(params.resource_kind);

    std::ostringstream ss;
    ss << "# chamnet-eval v1\n"
       << "gene " << to_string(gene) << "\n"
       << "accuracy " << num(fr.accuracy) << "\n"
       << "accuracy_sd " << num(std::sqrt(std::max(0.0, pred.variance))) << "\n"
       << "resource_" << unit << " " << num(fr.resource) << "\n"
       << "fitness " << num(fr.fitness) << "\n"
       << "feasible " << (fr.feasible ? 1 : 0) << "\n"
       << "flops " << flops(space, gene) << "\n";
    auto os = open_out(dir / "eval.txt");
    os << ss.str();
    std::cout << ss.str();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "eval took " << secs << " s\n";
    return {"eval.txt"};
}

std::vector<std::string> cmd_trace_energy(const Run& r, const fs::path& dir) {
    if (r.trace.empty()) throw ConfigViolation("--trace is required");
    auto is = open_in(r.trace);
    const double mj = trace_to_energy(read_power_trace(is));
    auto os = open_out(dir / "energy.txt");
    os << "energy_mj " << num(mj) << "\n";
    std::cout << "energy_mj " << num(mj) << "\n";
    return {"energy.txt"};
}

std::string manifest_command(const std::string& path) {
    auto is = open_in(path);
    std::string line;
    while (std::getline(is, line)) {
        const auto t = detail::trim(line);
        if (t.rfind("command", 0) != 0) continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) continue;
        auto v = std::string(detail::trim(t.substr(eq + 1)));
        if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'')) v = v.substr(1, v.size() - 2);
        return v;
    }
    throw MalformedRecord(1, "manifest '" + path + "' has no command");
}

void add_sampler_options(CLI::App* sub, SamplerOpts& s) {
    sub->add_option("--pool-size", s.pool_size, "QMC candidate pool size (k)");
    sub->add_option("--explore", s.explore, "exploration samples per round (p)");
    sub->add_option("--exploit", s.exploit, "exploitation samples per round (q)");
    sub->add_option("--mse-threshold", s.mse_threshold, "stop once LOO-MSE falls below this (e)");
    sub->add_option("--max-samples", s.max_samples, "total sample budget");
    sub->add_option("--initial", s.initial, "initial QMC batch size");
    sub->add_option("--center-targets", s.center, "subtract the target mean before fitting");
    sub->add_option("--oracle", s.oracle, "synthetic, file:OBSERVATION_LOG or cmd:COMMAND");
    sub->add_option("--oracle-seed", s.oracle_seed, "seed of the synthetic landscape noise");
    sub->add_option("--noise", s.noise, "synthetic oracle noise standard deviation");
    sub->add_option("--device", s.device, "synthetic device profile (cpu_like or dsp_like)");
    sub->add_option("--resume", s.resume, "observation log whose values are reused");
}

void add_fitness_options(CLI::App* sub, Run& r, bool with_thres) {
    if (with_thres) sub->add_option("--thres", r.fit.thres, "resource budget with unit, e.g. 20ms or 5mJ");
    sub->add_option("--alpha", r.fit.alpha, "penalty scale with unit, e.g. 10/ms");
    sub->add_option("--w", r.fit.w, "penalty exponent");
    sub->add_option("--penalty", r.fit.penalty, "ramp or step");
}

void add_predictor_options(CLI::App* sub, Run& r) {
    sub->add_option("--acc", r.paths.acc, "accuracy predictor from build-acc");
    sub->add_option("--lut", r.paths.lut, "latency LUT from build-lut");
    sub->add_option("--energy", r.paths.energy, "energy predictor from build-energy");
}

void add_ga_options(CLI::App* sub, Run& r) {
    sub->add_option("--population", r.ga.population, "individuals per generation");
    sub->add_option("--survivors", r.ga.survivors, "elites kept per generation");
    sub->add_option("--iterations", r.ga.iterations, "generations");
}

int run(int argc, char** argv);

int dispatch(CLI::App& app, Run& r) {
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "rerun") {
        const std::string cmd = manifest_command(r.manifest);
        if (cmd == "rerun") throw ConfigViolation("a manifest cannot name rerun");
        std::vector<std::string> args = {"chamnet", "--config", r.manifest, "--out", r.g.out};
        if (r.g.force) args.push_back("--force");
        args.push_back(cmd);
        std::vector<char*> ptrs;
        for (auto& a : args) ptrs.push_back(a.data());
        return run(int(ptrs.size()), ptrs.data());
    }
    if (name == "pool" && r.pool_k == 0) throw ConfigViolation("--k must be positive");
    const fs::path dir = prepare_out(r.g);
    std::vector<std::string> outputs;
    if (name == "pool") outputs = cmd_pool(r, dir);
    else if (name == "build-acc") outputs = cmd_build_acc(r, dir);
    else if (name == "build-lut") outputs = cmd_build_lut(r, dir);
    else if (name == "build-energy") outputs = cmd_build_energy(r, dir);
    else if (name == "search") outputs = cmd_search(r, dir);
    else if (name == "sweep") outputs = cmd_sweep(r, dir);
    else if (name == "eval") outputs = cmd_eval(r, dir);
    else if (name == "trace-energy") outputs = cmd_trace_energy(r, dir);
    write_manifest(dir, app, *sub, outputs);
    return ExitCode::ok;
}

int run(int argc, char** argv) {
    Run r;
    r.energy_sampler.exploit = 0;
    r.energy_sampler.center = true;

    CLI::App app{"platform-aware neural architecture adaptation"};
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "INI config file; a run's manifest.ini works here");
    app.allow_config_extras(CLI::config_extras_mode::ignore);
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    app.add_option("--space", r.g.space, "chamnet-mobile, chamnet-res or a schema file");
    app.add_option("--channel-step", r.g.channel_step, "granularity of searchable channel counts");
    app.add_option("--seed", r.g.seed, "master seed");
    app.add_option("--threads", r.g.threads, "worker threads (results do not depend on this)");
    app.add_option("--out", r.g.out, "output directory");
    app.add_flag("--force", r.g.force, "overwrite an existing run in --out");

    auto* pool = app.add_subcommand("pool", "write a QMC pool of genes");
    pool->add_option("--k", r.pool_k, "number of genes");

    auto* acc = app.add_subcommand("build-acc", "build the GP accuracy predictor");
    add_sampler_options(acc, r.acc_sampler);

    auto* lut = app.add_subcommand("build-lut", "build an operator latency LUT");
    lut->add_option("--device", r.lut_device, "synthetic device profile (cpu_like or dsp_like)");
    lut->add_option("--records", r.lut_records, "existing LUT file to ingest");

    auto* energy = app.add_subcommand("build-energy", "build the GP energy predictor");
    add_sampler_options(energy, r.energy_sampler);

    auto* search_cmd = app.add_subcommand("search", "constrained evolutionary search");
    add_predictor_options(search_cmd, r);
    add_fitness_options(search_cmd, r, true);
    add_ga_options(search_cmd, r);

    auto* sweep = app.add_subcommand("sweep", "search across a list of thresholds");
    add_predictor_options(sweep, r);
    add_fitness_options(sweep, r, false);
    add_ga_options(sweep, r);
    sweep->add_option("--thres-list", r.thres_list, "comma-separated budgets with units");

    auto* eval_cmd = app.add_subcommand("eval", "score one gene against the predictors");
    add_predictor_options(eval_cmd, r);
    add_fitness_options(eval_cmd, r, true);
    eval_cmd->add_option("--gene", r.gene, "comma-separated gene values")->required();

    auto* trace = app.add_subcommand("trace-energy", "per-inference energy from a power trace");
    trace->add_option("--trace", r.trace, "chamnet-trace v1 file");

    auto* rerun = app.add_subcommand("rerun", "repeat a run from its manifest");
    rerun->add_option("manifest", r.manifest, "manifest.ini of the earlier run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ExitCode::ok : ExitCode::usage;
    }
    return dispatch(app, r);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "chamnet: error: " << e.what() << "\n";
        switch (e.error_class()) {
            case ErrorClass::usage: return ExitCode::usage;
            case ErrorClass::data: return ExitCode::data;
            case ErrorClass::oracle: return ExitCode::oracle_failed;
            case ErrorClass::internal: return ExitCode::internal;
        }
    } catch (const std::exception& e) {
        std::cerr << "chamnet: internal error: " << e.what() << "\n";
    }
    return ExitCode::internal;
}
