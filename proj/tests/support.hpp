#pragma once

// Shared fixtures for the test executables.

#include <algorithm>
#include <cmath>
#include <memory>
#include <functional>
#include <string>
#include <vector>

#include "pzero/dataset.hpp"
#include "pzero/lattice.hpp"
#include "pzero/policy.hpp"
#include "pzero/rng.hpp"

namespace testing {

using namespace pzero;

inline policy::PolicyParams small_params(std::size_t length, std::uint64_t seed, double scale = 0.5,
                                         std::size_t hidden = 6)
{
    policy::Dimensions d;
    d.embedding = 3;
    d.context = 4;
    d.hidden = hidden;
    d.features = policy::feature_count(length);
    return policy::PolicyParams::random(Alphabet(), d, seed, scale);
}

inline lattice::BackboneTarget target_from(const char* wt, const lattice::Walk& walk, std::string id = "t")
{
    return lattice::make_target(std::move(id), walk, parse_sequence(wt));
}

// U-bend on four residues: (0,0) (1,0) (1,1) (0,1), contact (0, 3).
inline lattice::Walk u_bend() { return {{0, 0}, {1, 0}, {1, 1}, {0, 1}}; }

// Small dataset cached per (length, n_train, n_test, seed).
inline const Dataset& cached_dataset(int length, std::size_t n_train, std::size_t n_test, std::uint64_t seed = 1)
{
    struct Entry {
        int l;
        std::size_t a, b;
        std::uint64_t s;
        Dataset d;
    };
    static std::vector<std::unique_ptr<Entry>> cache;
    for (auto& e : cache) {
        if (e->l == length && e->a == n_train && e->b == n_test && e->s == seed) {
            return e->d;
        }
    }
    cache.push_back(std::make_unique<Entry>(Entry{length, n_train, n_test, seed,
                                                  build_dataset({length, n_train, n_test, seed, 0})}));
    return cache.back()->d;
}

inline double rel_err(double a, double b)
{
    return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

/// Central differences of f over every parameter, compared with grad.
/// Returns the worst relative error.
inline double worst_fd_error(policy::PolicyParams params, const policy::PolicyParams& grad,
                             const std::function<double(const policy::PolicyParams&)>& f, double h = 1e-5)
{
    std::vector<double*> slots;
    params.for_each([&](double& v) { slots.push_back(&v); });
    std::vector<double> analytic;
    grad.for_each([&](const double& v) { analytic.push_back(v); });
    double worst = 0.0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const double keep = *slots[i];
        *slots[i] = keep + h;
        const double up = f(params);
        *slots[i] = keep - h;
        const double down = f(params);
        *slots[i] = keep;
        const double numeric = (up - down) / (2 * h);
        // floor keeps near-zero entries from dominating through roundoff
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-5});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace testing
