#pragma once

// Quasi-Monte-Carlo gene pools from a digitally shifted Sobol sequence.

#include <boost/random/sobol.hpp>

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "chamnet/error.hpp"
#include "chamnet/rng.hpp"
#include "chamnet/space.hpp"

namespace chamnet {

/// Sobol points in [0,1)^dims starting at index 0, each coordinate XOR-shifted
/// by a seed-derived 32-bit mask. The shift keeps every power-of-two prefix a
/// stratified net.
class ShiftedSobol {
public:
    ShiftedSobol(std::size_t dims, std::uint64_t seed) : dims_(dims), engine_(dims ? dims : 1) {
        shift_.resize(dims);
        for (std::size_t d = 0; d < dims; ++d)
            shift_[d] = static_cast<std::uint32_t>(derive_seed(seed, d) >> 32);
    }

    std::vector<double> next() {
        std::vector<double> u(dims_);
        for (std::size_t d = 0; d < dims_; ++d) {
            // Boost's engine begins at index 1; index 0 is the origin.
            const std::uint32_t raw = started_ ? static_cast<std::uint32_t>(engine_()) : 0u;
            u[d] = static_cast<double>(raw ^ shift_[d]) * 0x1.0p-32;
        }
        started_ = true;
        return u;
    }

private:
    std::size_t dims_;
    boost::random::sobol_engine<std::uint32_t, 32> engine_;
    std::vector<std::uint32_t> shift_;
    bool started_ = false;
};

/// `k` distinct integer points inside `bounds`. Points that collide after
/// rounding are skipped in favour of later sequence points.
inline std::vector<Gene> qmc_points(const std::vector<GeneBound>& bounds, std::size_t k,
                                    std::uint64_t seed) {
    if (k == 0) throw ConfigViolation("pool size must be >= 1");
    std::uint64_t card = 1;
    for (const GeneBound& b : bounds) {
        const auto l = static_cast<std::uint64_t>(b.levels());
        card = card > UINT64_MAX / l ? UINT64_MAX : card * l;
    }
    if (card < k)
        throw PoolExhausted("space has only " + std::to_string(card) + " distinct genes, " +
                            std::to_string(k) + " requested");

    ShiftedSobol seq(bounds.size(), seed);
    std::vector<Gene> pool;
    pool.reserve(k);
    std::unordered_set<Gene, GeneHash> seen;
    const std::uint64_t max_draws = 64 * static_cast<std::uint64_t>(k) + 4096;
    for (std::uint64_t draw = 0; pool.size() < k; ++draw) {
        if (draw >= max_draws)
            throw PoolExhausted("could not draw " + std::to_string(k) + " distinct genes after " +
                                std::to_string(max_draws) + " sequence points");
        const auto u = seq.next();
        Gene g;
        g.values.resize(bounds.size());
        for (std::size_t d = 0; d < bounds.size(); ++d) {
            const int levels = bounds[d].levels();
            int level = static_cast<int>(u[d] * levels);
            if (level >= levels) level = levels - 1;
            g[d] = bounds[d].value_at(level);
        }
        if (seen.insert(g).second) pool.push_back(std::move(g));
    }
    return pool;
}

inline std::vector<Gene> qmc_pool(const SearchSpace& space, std::size_t k, std::uint64_t seed) {
    return qmc_points(space.bounds(), k, seed);
}

}  // namespace chamnet
