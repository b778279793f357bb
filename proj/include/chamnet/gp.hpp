#pragma once

// Gaussian-process regression with a unit-variance RBF kernel and zero prior
// mean: fit, predictive mean/variance, leave-one-out error and a grid search
// over (gamma, noise variance).

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chamnet/error.hpp"
#include "chamnet/space.hpp"

namespace chamnet {

struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
};

struct GPOptions {
    /// Subtract the target mean before fitting and add it back on prediction.
    bool center_targets = false;
};

/// exp(-gamma * ||x - y||^2)
inline double kernel(std::span<const double> x, std::span<const double> y, double gamma) {
    if (x.size() != y.size())
        throw DimensionMismatch("kernel arguments have " + std::to_string(x.size()) + " and " +
                                std::to_string(y.size()) + " entries");
    if (!(gamma > 0.0)) throw ConfigViolation("kernel gamma must be positive");
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

namespace detail {

inline Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
    // Rows are points.
    Eigen::MatrixXd k(a.rows(), b.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            k(i, j) = std::exp(-gamma * (a.row(i) - b.row(j)).squaredNorm());
    return k;
}

/// Diagonal jitter ladder tried when the Cholesky factorization fails.
inline constexpr std::array<double, 8> kJitterLadder = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4};

}  // namespace detail

class GPModel {
public:
    GPModel() = default;

    /// Fits on rows of `inputs` (each normalized to [0,1]) against `targets`.
    static GPModel fit(Eigen::MatrixXd inputs, Eigen::VectorXd targets, double gamma, double noise_var,
                       GPOptions opts = {}) {
        const Eigen::Index n = inputs.rows();
        if (n < 1) throw ConfigViolation("GP fit needs at least one observation");
        if (targets.size() != n)
            throw DimensionMismatch("GP fit got " + std::to_string(n) + " inputs and " +
                                    std::to_string(targets.size()) + " targets");
        if (!(gamma > 0.0)) throw ConfigViolation("GP gamma must be positive");
        if (!(noise_var >= 0.0)) throw ConfigViolation("GP noise variance must be non-negative");
        if (inputs.size() > 0 && (inputs.minCoeff() < 0.0 || inputs.maxCoeff() > 1.0))
            throw Error("GP inputs must be normalized to [0,1]");
        if (!targets.allFinite()) throw Error("GP targets must be finite");

        if (noise_var == 0.0) {
            // Exact interpolation of conflicting duplicates is impossible.
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = i + 1; j < n; ++j)
                    if (targets(i) != targets(j) && inputs.row(i) == inputs.row(j))
                        throw SingularKernel("duplicate inputs " + std::to_string(i) + " and " +
                                             std::to_string(j) +
                                             " carry different targets with zero noise");
        }

        GPModel m;
        m.gamma_ = gamma;
        m.noise_var_ = noise_var;
        m.opts_ = opts;
        m.offset_ = opts.center_targets ? targets.mean() : 0.0;
        m.inputs_ = std::move(inputs);
        m.targets_ = std::move(targets);

        const Eigen::MatrixXd base = detail::rbf_gram(m.inputs_, m.inputs_, gamma) +
                                     noise_var * Eigen::MatrixXd::Identity(n, n);
        for (double jitter : detail::kJitterLadder) {
            Eigen::MatrixXd a = base;
            a.diagonal().array() += jitter;
            Eigen::LLT<Eigen::MatrixXd> llt(a);
            if (llt.info() != Eigen::Success) continue;
            Eigen::MatrixXd l = llt.matrixL();
            if ((l.diagonal().array() <= 0.0).any() || !l.allFinite()) continue;
            m.jitter_ = jitter;
            m.factor_ = std::move(l);
            m.alpha_ = llt.solve((m.targets_.array() - m.offset_).matrix());
            return m;
        }
        throw SingularKernel("kernel matrix is not positive definite even with jitter 1e-4");
    }

    Prediction predict(std::span<const double> x) const {
        return predict(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
    }

    Prediction predict(const Eigen::VectorXd& x) const {
        if (x.size() != inputs_.cols())
            throw DimensionMismatch("query has " + std::to_string(x.size()) + " dims, model has " +
                                    std::to_string(inputs_.cols()));
        Eigen::VectorXd k(inputs_.rows());
        for (Eigen::Index i = 0; i < inputs_.rows(); ++i)
            k(i) = std::exp(-gamma_ * (inputs_.row(i).transpose() - x).squaredNorm());
        const Eigen::VectorXd v = factor_.triangularView<Eigen::Lower>().solve(k);
        return {offset_ + k.dot(alpha_), std::max(0.0, 1.0 - v.squaredNorm())};
    }

    /// Predictions for every row of `xs`.
    std::vector<Prediction> predict_batch(const Eigen::MatrixXd& xs) const {
        if (xs.rows() > 0 && xs.cols() != inputs_.cols())
            throw DimensionMismatch("query has " + std::to_string(xs.cols()) + " dims, model has " +
                                    std::to_string(inputs_.cols()));
        const Eigen::MatrixXd k = detail::rbf_gram(inputs_, xs, gamma_);  // n x m
        const Eigen::MatrixXd v = factor_.triangularView<Eigen::Lower>().solve(k);
        const Eigen::VectorXd mean = k.transpose() * alpha_;
        std::vector<Prediction> out(static_cast<std::size_t>(xs.rows()));
        for (Eigen::Index j = 0; j < xs.rows(); ++j)
            out[static_cast<std::size_t>(j)] = {offset_ + mean(j),
                                                std::max(0.0, 1.0 - v.col(j).squaredNorm())};
        return out;
    }

    /// Relative Frobenius error of L L^T against the (jittered) kernel matrix.
    double factorization_error() const {
        Eigen::MatrixXd a = detail::rbf_gram(inputs_, inputs_, gamma_);
        a.diagonal().array() += noise_var_ + jitter_;
        return (factor_ * factor_.transpose() - a).norm() / a.norm();
    }

    std::size_t size() const { return static_cast<std::size_t>(inputs_.rows()); }
    std::size_t dims() const { return static_cast<std::size_t>(inputs_.cols()); }
    double gamma() const { return gamma_; }
    double noise_var() const { return noise_var_; }
    double jitter() const { return jitter_; }
    double offset() const { return offset_; }
    const GPOptions& options() const { return opts_; }
    const Eigen::MatrixXd& inputs() const { return inputs_; }
    const Eigen::VectorXd& targets() const { return targets_; }
    const Eigen::VectorXd& alpha_weights() const { return alpha_; }
    const Eigen::MatrixXd& factor() const { return factor_; }

private:
    Eigen::MatrixXd inputs_;
    Eigen::VectorXd targets_;
    double gamma_ = 1.0;
    double noise_var_ = 0.0;
    double jitter_ = 0.0;
    double offset_ = 0.0;
    GPOptions opts_;
    Eigen::MatrixXd factor_;
    Eigen::VectorXd alpha_;
};

/// Mean squared leave-one-out error of the posterior mean, in closed form.
/// With A = (K + s2 I)^-1 and a fixed prior mean, fold i misses by
/// alpha_i / A_ii. A centred model uses the held-out mean c_i, which adds
/// (y_i - mean) / (n - 1) * (A 1)_i to the numerator.
inline double loo_mse(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, double gamma,
                      double noise_var, GPOptions opts = {}) {
    const Eigen::Index n = inputs.rows();
    if (n < 2) throw ConfigViolation("leave-one-out needs at least two observations");
    const GPModel m = GPModel::fit(inputs, targets, gamma, noise_var, opts);
    const auto lower = m.factor().triangularView<Eigen::Lower>();
    const Eigen::MatrixXd linv = lower.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::ArrayXd a_diag = linv.colwise().squaredNorm().transpose().array();
    Eigen::ArrayXd num = m.alpha_weights().array();
    if (opts.center_targets) {
        const Eigen::ArrayXd a_ones = (linv.transpose() * linv.rowwise().sum()).array();
        num += (targets.array() - m.offset()) / double(n - 1) * a_ones;
    }
    return (num / a_diag).square().mean();
}

struct Hyperparams {
    double gamma = 1.0;
    double noise_var = 1e-4;
    double loo_mse = std::numeric_limits<double>::infinity();
};

/// 13 log-spaced gamma values covering [1e-3, 1e3].
inline std::array<double, 13> gamma_grid() {
    std::array<double, 13> g{};
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::pow(10.0, -3.0 + 0.5 * double(i));
    return g;
}

inline constexpr std::array<double, 4> kNoiseGrid = {1e-6, 1e-4, 1e-2, 1e-1};

/// Grid search minimising leave-one-out MSE; ties go to the smaller gamma,
/// then the smaller noise variance.
inline Hyperparams tune_hyperparams(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                    GPOptions opts = {}) {
    if (inputs.rows() < 4) throw ConfigViolation("hyperparameter tuning needs at least four observations");
    Hyperparams best;
    bool any = false;
    std::string last_error;
    for (double gamma : gamma_grid()) {
        for (double noise : kNoiseGrid) {
            double mse = 0.0;
            try {
                mse = loo_mse(inputs, targets, gamma, noise, opts);
            } catch (const SingularKernel& e) {
                last_error = e.what();
                continue;
            }
            if (!std::isfinite(mse)) continue;
            if (!any || mse < best.loo_mse) best = {gamma, noise, mse};
            any = true;
        }
    }
    if (!any) throw SingularKernel("every hyperparameter grid cell failed: " + last_error);
    return best;
}

/// Rows of normalized genes.
inline Eigen::MatrixXd normalized_matrix(const std::vector<GeneBound>& bounds, std::span<const Gene> genes) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(genes.size()), static_cast<Eigen::Index>(bounds.size()));
    for (std::size_t i = 0; i < genes.size(); ++i) {
        const auto row = normalize(bounds, genes[i]);
        for (std::size_t d = 0; d < row.size(); ++d)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = row[d];
    }
    return x;
}

/// A GP bound to the gene bounds of one search space.
class GenePredictor {
public:
    GenePredictor() = default;
    GenePredictor(std::string space_name, std::vector<GeneBound> bounds, GPModel model)
        : space_name_(std::move(space_name)), bounds_(std::move(bounds)), model_(std::move(model)) {}

    Prediction predict(const Gene& gene) const {
        const auto x = normalize(bounds_, gene);
        return model_.predict(std::span<const double>(x));
    }

    std::vector<Prediction> predict_batch(std::span<const Gene> genes) const {
        return model_.predict_batch(normalized_matrix(bounds_, genes));
    }

    const std::string& space_name() const { return space_name_; }
    const std::vector<GeneBound>& bounds() const { return bounds_; }
    const GPModel& model() const { return model_; }

    /// Throws SpaceMismatch unless `space` has the bounds this predictor was built on.
    void check_space(const SearchSpace& space) const {
        if (space.bounds() != bounds_)
            throw SpaceMismatch("predictor was built for space '" + space_name_ +
                                "' with different gene bounds than '" + space.name() + "'");
    }

    // Text dump: doubles are written as hex floats so a reload refits the
    // exact same matrix.
    void save(std::ostream& os) const {
        auto hex = [](double v) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%a", v);
            return std::string(buf);
        };
        os << "chamnet-gp v1\n";
        os << "space " << space_name_ << "\n";
        os << "gamma " << hex(model_.gamma()) << "\n";
        os << "noise_var " << hex(model_.noise_var()) << "\n";
        os << "center_targets " << (model_.options().center_targets ? 1 : 0) << "\n";
        os << "dims " << bounds_.size() << "\n";
        for (const GeneBound& b : bounds_) os << "bound " << b.lower << ' ' << b.upper << ' ' << b.step << "\n";
        os << "count " << model_.size() << "\n";
        for (std::size_t i = 0; i < model_.size(); ++i) {
            for (std::size_t d = 0; d < model_.dims(); ++d)
                os << hex(model_.inputs()(Eigen::Index(i), Eigen::Index(d))) << ' ';
            os << hex(model_.targets()(Eigen::Index(i))) << "\n";
        }
    }

    static GenePredictor load(std::istream& is) {
        std::size_t line_no = 0;
        std::string line;
        auto next = [&](std::string_view key) {
            if (!std::getline(is, line)) throw MalformedRecord(line_no + 1, "unexpected end of GP model");
            ++line_no;
            std::istringstream ss(line);
            std::string k;
            ss >> k;
            if (!key.empty() && k != key)
                throw MalformedRecord(line_no, "expected '" + std::string(key) + "', got '" + k + "'");
            std::string rest;
            std::getline(ss, rest);
            return std::string(detail::trim(rest));
        };
        auto num = [&](const std::string& s) {
            char* end = nullptr;
            const double v = std::strtod(s.c_str(), &end);
            if (end == s.c_str()) throw MalformedRecord(line_no, "bad number '" + s + "'");
            return v;
        };
        if (!std::getline(is, line) || detail::trim(line) != "chamnet-gp v1")
            throw MalformedRecord(1, "not a chamnet-gp v1 model");
        ++line_no;
        std::string name = next("space");
        const double gamma = num(next("gamma"));
        const double noise = num(next("noise_var"));
        GPOptions opts;
        opts.center_targets = next("center_targets") == "1";
        const auto dims = static_cast<std::size_t>(num(next("dims")));
        std::vector<GeneBound> bounds;
        for (std::size_t d = 0; d < dims; ++d) {
            std::istringstream ss(next("bound"));
            GeneBound b;
            if (!(ss >> b.lower >> b.upper >> b.step)) throw MalformedRecord(line_no, "bad bound");
            bounds.push_back(b);
        }
        const auto n = static_cast<Eigen::Index>(num(next("count")));
        Eigen::MatrixXd x(n, static_cast<Eigen::Index>(dims));
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!std::getline(is, line)) throw MalformedRecord(line_no + 1, "missing observation row");
            ++line_no;
            std::istringstream ss(line);
            std::string tok;
            for (Eigen::Index d = 0; d <= static_cast<Eigen::Index>(dims); ++d) {
                if (!(ss >> tok)) throw MalformedRecord(line_no, "short observation row");
                (d < static_cast<Eigen::Index>(dims) ? x(i, d) : y(i)) = num(tok);
            }
        }
        return GenePredictor(std::move(name), std::move(bounds),
                             GPModel::fit(std::move(x), std::move(y), gamma, noise, opts));
    }

private:
    std::string space_name_;
    std::vector<GeneBound> bounds_;
    GPModel model_;
};

}  // namespace chamnet
