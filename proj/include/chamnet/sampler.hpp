#pragma once

// Iterative predictor construction: a QMC architecture pool, a random seed
// batch, then rounds of exploration (highest predictive uncertainty) and
// exploitation (highest predicted value per MAC) until the leave-one-out
// error drops below a threshold or the sample budget is spent.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "chamnet/error.hpp"
#include "chamnet/gp.hpp"
#include "chamnet/qmc.hpp"
#include "chamnet/rng.hpp"
#include "chamnet/space.hpp"

namespace chamnet {

struct SamplerConfig {
    std::size_t pool_size = 2048;         // k
    std::size_t explore_count = 8;        // p
    std::size_t exploit_count = 8;        // q
    double mse_threshold = 1e-4;          // e
    std::size_t max_total_samples = 240;
    std::size_t initial_random = 48;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    GPOptions gp;

    void validate() const {
        if (explore_count + exploit_count < 1)
            throw ConfigViolation("sampler needs explore_count + exploit_count >= 1");
        if (pool_size < initial_random + explore_count + exploit_count)
            throw ConfigViolation("pool_size must be >= initial_random + explore_count + exploit_count");
        if (!(mse_threshold > 0.0)) throw ConfigViolation("mse_threshold must be positive");
        if (max_total_samples < 1) throw ConfigViolation("max_total_samples must be >= 1");
        if (initial_random < 1) throw ConfigViolation("initial_random must be >= 1");
    }
};

enum class SampleSource { initial, explore, exploit };

inline std::string_view to_string(SampleSource s) {
    switch (s) {
        case SampleSource::initial: return "initial";
        case SampleSource::explore: return "explore";
        case SampleSource::exploit: return "exploit";
    }
    return "?";
}

struct Observation {
    Gene gene;
    double value = 0.0;
    SampleSource source = SampleSource::initial;
    std::size_t iteration = 0;

    bool operator==(const Observation&) const = default;
};

/// Something that turns a gene into a measured value (accuracy or energy).
/// Implementations must be deterministic and safe to call from several threads.
class EvalOracle {
public:
    virtual ~EvalOracle() = default;
    virtual double evaluate(const Gene& gene) const = 0;
};

/// Adapts any callable to EvalOracle.
template <class Fn>
class FunctionOracle final : public EvalOracle {
public:
    explicit FunctionOracle(Fn fn) : fn_(std::move(fn)) {}
    double evaluate(const Gene& gene) const override { return fn_(gene); }

private:
    Fn fn_;
};

/// Evaluates `genes` on up to `threads` workers. Results are in input order;
/// the first failure by index is rethrown as OracleFailure.
inline std::vector<double> evaluate_batch(const EvalOracle& oracle, std::span<const Gene> genes,
                                          std::size_t threads = 1) {
    std::vector<double> out(genes.size());
    std::vector<std::exception_ptr> errors(genes.size());
    auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t i = first; i < genes.size(); i += stride) {
            try {
                out[i] = oracle.evaluate(genes[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, genes.size()));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    }
    for (std::size_t i = 0; i < genes.size(); ++i) {
        std::string reason;
        if (errors[i]) {
            try {
                std::rethrow_exception(errors[i]);
            } catch (const OracleFailure&) {
                throw;
            } catch (const std::exception& e) {
                reason = e.what();
            } catch (...) {
                reason = "unknown error";
            }
        } else if (!std::isfinite(out[i])) {
            reason = "non-finite value";
        }
        if (!reason.empty())
            throw OracleFailure("oracle failed on gene [" + to_string(genes[i]) + "]: " + reason);
    }
    return out;
}

struct Selection {
    std::vector<std::size_t> explore;
    std::vector<std::size_t> exploit;
};

/// Picks `p` candidates with the largest predictive standard deviation, then
/// `q` of the rest with the largest mean / MACs. Ties keep candidate order.
inline Selection select_samples(std::span<const Prediction> predictions, std::span<const double> macs,
                                std::size_t p, std::size_t q) {
    const std::size_t n = predictions.size();
    if (macs.size() != n) throw DimensionMismatch("one MAC count is needed per candidate");
    if (n == 0 || p + q > n)
        throw InsufficientCandidates("asked for " + std::to_string(p + q) + " samples from " +
                                     std::to_string(n) + " candidates");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    Selection sel;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::sqrt(predictions[a].variance) > std::sqrt(predictions[b].variance);
    });
    std::vector<char> taken(n, 0);
    for (std::size_t i = 0; i < p; ++i) {
        sel.explore.push_back(order[i]);
        taken[order[i]] = 1;
    }

    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return predictions[a].mean / macs[a] > predictions[b].mean / macs[b];
    });
    for (std::size_t i = 0; i < n && sel.exploit.size() < q; ++i)
        if (!taken[order[i]]) sel.exploit.push_back(order[i]);
    return sel;
}

/// Convenience overload scoring `candidates` with a fitted predictor.
template <class MacsFn>
Selection select_samples(const GenePredictor& model, std::span<const Gene> candidates, std::size_t p,
                         std::size_t q, MacsFn&& macs_of) {
    if (candidates.empty() || p + q > candidates.size())
        throw InsufficientCandidates("asked for " + std::to_string(p + q) + " samples from " +
                                     std::to_string(candidates.size()) + " candidates");
    const auto preds = model.predict_batch(candidates);
    std::vector<double> macs;
    macs.reserve(candidates.size());
    for (const Gene& g : candidates) macs.push_back(static_cast<double>(macs_of(g)));
    return select_samples(preds, macs, p, q);
}

using GeneValueMap = std::unordered_map<Gene, double, GeneHash>;

struct PredictorBuild {
    GenePredictor predictor;
    Hyperparams hyper;
    std::vector<Observation> observations;
    std::vector<double> loo_history;  // one entry per fit
    std::size_t iterations = 0;       // selection rounds after the initial batch
    std::size_t oracle_calls = 0;     // evaluations not served by `known`
};

struct BuildHooks {
    /// Values already measured (for example from a partial log); served
    /// without calling the oracle.
    const GeneValueMap* known = nullptr;
    /// Called once per observation, in log order.
    std::function<void(const Observation&)> on_observation;
    /// Called after each fit with the round index (0 = initial batch).
    std::function<void(std::size_t, const GenePredictor&)> on_fit;
};

namespace detail {

inline Hyperparams fit_hyper(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GPOptions& opts) {
    if (x.rows() >= 4) return tune_hyperparams(x, y, opts);
    Hyperparams h;
    if (x.rows() >= 2) h.loo_mse = loo_mse(x, y, h.gamma, h.noise_var, opts);
    return h;
}

}  // namespace detail

/// Runs the sampling loop over a fixed candidate pool.
inline PredictorBuild build_predictor_from_pool(const SearchSpace& space, std::span<const Gene> pool,
                                                const EvalOracle& oracle, const SamplerConfig& cfg,
                                                const BuildHooks& hooks = {}) {
    cfg.validate();
    if (pool.size() < cfg.initial_random + cfg.explore_count + cfg.exploit_count)
        throw PoolExhausted("pool of " + std::to_string(pool.size()) + " genes is smaller than one sampling round");
    for (const Gene& g : pool) require_valid(space, g);

    const auto bounds = space.bounds();
    std::vector<double> pool_macs(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool_macs[i] = static_cast<double>(flops(space, pool[i]));

    PredictorBuild out;
    std::vector<char> used(pool.size(), 0);
    std::vector<std::size_t> used_order;

    auto evaluate = [&](const std::vector<std::size_t>& idx, SampleSource src, std::size_t iter) {
        std::vector<Gene> todo;
        for (std::size_t i : idx)
            if (!hooks.known || !hooks.known->count(pool[i])) todo.push_back(pool[i]);
        const auto fresh = evaluate_batch(oracle, todo, cfg.threads);
        out.oracle_calls += todo.size();
        std::size_t f = 0;
        for (std::size_t i : idx) {
            double v;
            if (hooks.known && hooks.known->count(pool[i]))
                v = hooks.known->at(pool[i]);
            else
                v = fresh[f++];
            used[i] = 1;
            used_order.push_back(i);
            out.observations.push_back({pool[i], v, src, iter});
            if (hooks.on_observation) hooks.on_observation(out.observations.back());
        }
    };

    auto refit = [&](std::size_t round) {
        std::vector<Gene> genes;
        Eigen::VectorXd y(static_cast<Eigen::Index>(out.observations.size()));
        for (std::size_t i = 0; i < out.observations.size(); ++i) {
            genes.push_back(out.observations[i].gene);
            y(static_cast<Eigen::Index>(i)) = out.observations[i].value;
        }
        Eigen::MatrixXd x = normalized_matrix(bounds, genes);
        out.hyper = detail::fit_hyper(x, y, cfg.gp);
        out.predictor = GenePredictor(space.name(), bounds,
                                      GPModel::fit(std::move(x), std::move(y), out.hyper.gamma,
                                                   out.hyper.noise_var, cfg.gp));
        out.loo_history.push_back(out.hyper.loo_mse);
        if (hooks.on_fit) hooks.on_fit(round, out.predictor);
    };

    // Seed batch: a partial Fisher-Yates draw over pool indices.
    {
        Rng rng(derive_seed(cfg.seed, 0x1417));
        std::vector<std::size_t> perm(pool.size());
        std::iota(perm.begin(), perm.end(), 0);
        const std::size_t take = std::min(cfg.initial_random, cfg.max_total_samples);
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, perm.size() - i));
            std::swap(perm[i], perm[j]);
        }
        perm.resize(take);
        evaluate(perm, SampleSource::initial, 0);
    }
    refit(0);

    while (out.hyper.loo_mse >= cfg.mse_threshold && out.observations.size() < cfg.max_total_samples) {
        std::vector<std::size_t> cand_idx;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (!used[i]) cand_idx.push_back(i);
        if (cand_idx.empty()) break;

        const std::size_t budget = cfg.max_total_samples - out.observations.size();
        const std::size_t p = std::min({cfg.explore_count, budget, cand_idx.size()});
        const std::size_t q = std::min(cfg.exploit_count, std::min(budget, cand_idx.size()) - p);
        if (p + q == 0) break;

        std::vector<Gene> cand;
        std::vector<double> macs;
        for (std::size_t i : cand_idx) {
            cand.push_back(pool[i]);
            macs.push_back(pool_macs[i]);
        }
        const auto preds = out.predictor.predict_batch(cand);
        const Selection sel = select_samples(preds, macs, p, q);

        ++out.iterations;
        std::vector<std::size_t> explore, exploit;
        for (std::size_t i : sel.explore) explore.push_back(cand_idx[i]);
        for (std::size_t i : sel.exploit) exploit.push_back(cand_idx[i]);
        evaluate(explore, SampleSource::explore, out.iterations);
        evaluate(exploit, SampleSource::exploit, out.iterations);
        refit(out.iterations);
    }
    return out;
}

/// Draws a QMC pool of `cfg.pool_size` genes and runs the sampling loop.
inline PredictorBuild build_predictor(const SearchSpace& space, const EvalOracle& oracle,
                                      const SamplerConfig& cfg, const BuildHooks& hooks = {}) {
    cfg.validate();
    const auto pool = qmc_pool(space, cfg.pool_size, cfg.seed);
    return build_predictor_from_pool(space, pool, oracle, cfg, hooks);
}

// ---------------------------------------------------------------------------
// Observation log: one tab-separated record per evaluation.
//
//   # chamnet-observations v1
//   # space <name> dims <n>
//   # seq iter source value timestamp gene
//   0   0    initial 0.61234 -        224,32,16,...

struct ObservationLog {
    std::string space_name;
    std::size_t dims = 0;
    std::vector<Observation> records;
};

inline void write_observation_header(std::ostream& os, const std::string& space_name, std::size_t dims) {
    os << "# chamnet-observations v1\n";
    os << "# space " << space_name << " dims " << dims << "\n";
    os << "# seq\titer\tsource\tvalue\ttimestamp\tgene\n";
}

inline void write_observation(std::ostream& os, std::size_t seq, const Observation& o,
                              const std::string& timestamp = "-") {
    char value[40];
    std::snprintf(value, sizeof value, "%.17g", o.value);
    os << seq << '\t' << o.iteration << '\t' << to_string(o.source) << '\t' << value << '\t'
       << timestamp << '\t' << to_string(o.gene) << '\n';
}

inline ObservationLog read_observation_log(std::istream& is) {
    ObservationLog log;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(is, line)) {
        ++line_no;
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            if (line_no == 1) {
                if (t != "# chamnet-observations v1")
                    throw MalformedRecord(line_no, "not a chamnet-observations v1 log");
                header = true;
            } else if (t.rfind("# space ", 0) == 0) {
                std::istringstream ss(std::string(t.substr(8)));
                std::string dims_kw;
                if (!(ss >> log.space_name >> dims_kw >> log.dims) || dims_kw != "dims")
                    throw MalformedRecord(line_no, "bad space header");
            }
            continue;
        }
        if (!header) throw MalformedRecord(line_no, "missing chamnet-observations header");
        std::vector<std::string_view> cols;
        std::size_t pos = 0;
        while (true) {
            const auto tab = t.find('\t', pos);
            cols.push_back(t.substr(pos, tab == std::string_view::npos ? t.size() - pos : tab - pos));
            if (tab == std::string_view::npos) break;
            pos = tab + 1;
        }
        if (cols.size() != 6) throw MalformedRecord(line_no, "expected 6 tab-separated columns");
        Observation o;
        const auto seq = detail::parse_int(cols[0]);
        const auto iter = detail::parse_int(cols[1]);
        if (!seq || !iter || *iter < 0) throw MalformedRecord(line_no, "bad sequence or iteration number");
        if (static_cast<std::size_t>(*seq) != log.records.size())
            throw MalformedRecord(line_no, "sequence number out of order");
        o.iteration = static_cast<std::size_t>(*iter);
        if (cols[2] == "initial") o.source = SampleSource::initial;
        else if (cols[2] == "explore") o.source = SampleSource::explore;
        else if (cols[2] == "exploit") o.source = SampleSource::exploit;
        else throw MalformedRecord(line_no, "unknown source '" + std::string(cols[2]) + "'");
        const std::string value(cols[3]);
        char* end = nullptr;
        o.value = std::strtod(value.c_str(), &end);
        if (end != value.c_str() + value.size() || !std::isfinite(o.value))
            throw MalformedRecord(line_no, "bad value '" + value + "'");
        try {
            o.gene = parse_gene(cols[5]);
        } catch (const ParseError& e) {
            throw MalformedRecord(line_no, e.what());
        }
        if (log.dims && o.gene.size() != log.dims)
            throw MalformedRecord(line_no, "gene has " + std::to_string(o.gene.size()) + " entries, expected " +
                                               std::to_string(log.dims));
        log.records.push_back(std::move(o));
    }
    if (!header) throw MalformedRecord(1, "empty observation log");
    return log;
}

inline GeneValueMap to_value_map(const std::vector<Observation>& obs) {
    GeneValueMap m;
    for (const Observation& o : obs) m.emplace(o.gene, o.value);
    return m;
}

}  // namespace chamnet
