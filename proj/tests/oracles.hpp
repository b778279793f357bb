#pragma once

// Reference computations that take a different route from the library.

#include <Eigen/Dense>
#include <Eigen/LU>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "chamnet/gp.hpp"
#include "chamnet/space.hpp"

namespace oracle {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string data_path(const std::string& rel) { return std::string(CHAMNET_DATA_DIR) + "/" + rel; }

struct DensePrediction {
    double mean;
    double variance;
};

/// GP posterior through an explicit LU inverse of K + s2 I.
inline DensePrediction dense_gp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double gamma, double noise,
                                const Eigen::VectorXd& q, double offset = 0.0) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            double d = 0.0;
            for (Eigen::Index c = 0; c < x.cols(); ++c) d += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
            k(i, j) = std::exp(-gamma * d) + (i == j ? noise : 0.0);
        }
    const Eigen::MatrixXd inv = k.fullPivLu().inverse();
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double d = 0.0;
        for (Eigen::Index c = 0; c < x.cols(); ++c) d += (x(i, c) - q(c)) * (x(i, c) - q(c));
        ks(i) = std::exp(-gamma * d);
    }
    const Eigen::VectorXd yc = (y.array() - offset).matrix();
    return {offset + ks.dot(inv * yc), 1.0 - ks.dot(inv * ks)};
}

/// Leave-one-out MSE by n separate refits.
inline double naive_loo(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double gamma, double noise,
                        bool center = false) {
    const Eigen::Index n = x.rows();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::MatrixXd xs(n - 1, x.cols());
        Eigen::VectorXd ys(n - 1);
        for (Eigen::Index j = 0, r = 0; j < n; ++j)
            if (j != i) {
                xs.row(r) = x.row(j);
                ys(r++) = y(j);
            }
        const double off = center ? ys.mean() : 0.0;
        const auto p = dense_gp(xs, ys, gamma, noise, x.row(i).transpose(), off);
        sum += (p.mean - y(i)) * (p.mean - y(i));
    }
    return sum / double(n);
}

/// Ordinary least squares with intercept; LOO residuals e_i / (1 - h_ii).
inline double linear_loo(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    Eigen::MatrixXd a(x.rows(), x.cols() + 1);
    a.col(0).setOnes();
    a.rightCols(x.cols()) = x;
    const Eigen::MatrixXd h = a * (a.transpose() * a).completeOrthogonalDecomposition().pseudoInverse() * a.transpose();
    const Eigen::VectorXd r = y - h * y;
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double e = r(i) / (1.0 - h(i, i));
        s += e * e;
    }
    return s / double(x.rows());
}

/// Standard MobileNetV2 1.0x multiply-accumulates at a given input size.
inline std::uint64_t mobilenet_v2_macs(std::uint64_t res = 224) {
    struct Row {
        std::uint64_t t, c, n, s;
    };
    const std::array<Row, 7> rows{{{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
                                   {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}}};
    std::uint64_t h = (res + 1) / 2, macs = h * h * 3 * 32 * 9, cin = 32;
    for (const Row& r : rows)
        for (std::uint64_t i = 0; i < r.n; ++i) {
            const std::uint64_t s = i == 0 ? r.s : 1, mid = cin * r.t;
            if (r.t != 1) macs += h * h * cin * mid;
            const std::uint64_t ho = (h + s - 1) / s;
            macs += ho * ho * mid * 9 + ho * ho * mid * r.c;
            h = ho;
            cin = r.c;
        }
    macs += h * h * cin * 1280 + h * h * 1280 + 1280 * 1000;
    return macs;
}

/// ResNet-50 style bottlenecks as laid out in the Res space defaults.
inline std::uint64_t resnet50_macs() {
    struct Row {
        std::uint64_t t, c, n, s;
    };
    const std::array<Row, 4> rows{{{4, 64, 3, 2}, {4, 128, 4, 2}, {4, 256, 6, 2}, {4, 512, 3, 2}}};
    std::uint64_t h = 112, macs = h * h * 3 * 64 * 49, cin = 64;
    for (const Row& r : rows)
        for (std::uint64_t i = 0; i < r.n; ++i) {
            const std::uint64_t s = i == 0 ? r.s : 1, out = r.c * r.t;
            const std::uint64_t ho = (h + s - 1) / s;
            macs += h * h * cin * r.c + ho * ho * r.c * r.c * 9 + ho * ho * r.c * out;
            if (s != 1 || cin != out) macs += ho * ho * cin * out;
            h = ho;
            cin = out;
        }
    macs += h * h * cin + cin * 1000;
    return macs;
}

/// Every gene of a space with small bounds, in lexicographic order.
inline std::vector<chamnet::Gene> enumerate(const std::vector<chamnet::GeneBound>& bounds) {
    std::vector<chamnet::Gene> out;
    chamnet::Gene g;
    for (const auto& b : bounds) g.values.push_back(b.lower);
    while (true) {
        out.push_back(g);
        std::size_t i = bounds.size();
        while (i > 0) {
            --i;
            if (g.values[i] + bounds[i].step <= bounds[i].upper) {
                g.values[i] += bounds[i].step;
                break;
            }
            g.values[i] = bounds[i].lower;
            if (i == 0) return out;
        }
        if (bounds.empty()) return out;
    }
}

}  // namespace oracle
