#pragma once

// Mean-field analysis of the regularized objective on a finite sequence space:
//   J[p] = E_p[r] - a_kl KL(p || p_ref) - (a_div / 2) E_{p x p}[cos(psi(y), psi(y'))]

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pzero/policy.hpp"
#include "pzero/sequence.hpp"

namespace pzero::theory {

struct FiniteEnsemble {
    std::size_t length = 0;
    std::vector<Sequence> space;           // all binary sequences of `length`
    std::vector<double> p_ref;             // strictly positive, sums to 1
    std::vector<double> reward;
    std::vector<std::vector<double>> psi;  // unit vectors
    std::vector<double> kernel;            // |Y| x |Y| cosines, row-major

    std::size_t size() const noexcept { return space.size(); }
    double c(std::size_t a, std::size_t b) const { return kernel[a * space.size() + b]; }

    /// Domain error unless p_ref is a positive distribution and every psi is
    /// a unit vector.
    void validate() const;
};

/// psi(y) = (+-1, ..., +-1) / sqrt(L), + for H.
std::vector<std::vector<double>> token_sign_embeddings(std::span<const Sequence> space);

/// Random ensemble over {H,P}^L: Dirichlet-like p_ref, uniform rewards in
/// [0, 1], token-sign embeddings. Capacity error above L = 8.
FiniteEnsemble random_ensemble(std::size_t length, std::uint64_t seed);

/// Builds an ensemble from explicit pieces (kernel filled in).
FiniteEnsemble make_ensemble(std::vector<Sequence> space, std::vector<double> p_ref, std::vector<double> reward,
                             std::vector<std::vector<double>> psi);

/// Replaces psi with the pooled embeddings of a frozen policy on `cond`.
void use_policy_embeddings(FiniteEnsemble& ens, const policy::PolicyParams& params, const policy::Condition& cond);

struct Objective {
    double expected_reward = 0.0;
    double kl = 0.0;
    double pair_direct = 0.0;     // sum_{y,y'} p p' c
    double pair_mean_norm = 0.0;  // |E_p psi|^2
    double value = 0.0;
};

/// Strict form: domain error for a zero entry of p when a_kl > 0.
Objective objective_J(std::span<const double> p, const FiniteEnsemble& ens, double a_kl, double a_div);
/// Boundary form with 0 log 0 = 0, for point masses.
Objective objective_J_boundary(std::span<const double> p, const FiniteEnsemble& ens, double a_kl, double a_div);

/// p* proportional to p_ref exp(r / a_kl).
std::vector<double> boltzmann(const FiniteEnsemble& ens, double a_kl);

/// Phi_p(y) = sum_y' p(y') c(y, y').
std::vector<double> repulsion(std::span<const double> p, const FiniteEnsemble& ens);

/// Max-norm of the projected gradient of J on the simplex at p.
double stationarity(std::span<const double> p, const FiniteEnsemble& ens, double a_kl, double a_div);

struct FixedPoint {
    std::vector<double> p;
    int iterations = 0;
    double residual = 0.0;  // max-norm change of the last iteration
    double stationarity = 0.0;
    std::vector<double> residual_trace;
};

inline constexpr double fixed_point_tolerance = 1e-12;

/// Damped iteration p <- (1 - g) p + g normalize(p_ref exp((r - a_div Phi_p) / a_kl)).
/// Convergence error (with the residual trace) after max_iterations.
FixedPoint solve_fixed_point(const FiniteEnsemble& ens, double a_kl, double a_div, double damping = 0.5,
                             double tolerance = fixed_point_tolerance, int max_iterations = 100000);

struct BarrierRow {
    double eps = 0.0;
    double quotient = 0.0;
};

struct BarrierProbe {
    std::vector<BarrierRow> rows;
    double slope = 0.0;  // least-squares slope of quotient against -log eps
    double intercept = 0.0;
    bool increasing = false;  // strictly increasing as eps shrinks
};

/// (J[(1-e) delta_star + e delta_prime] - J[delta_star]) / e over the grid.
BarrierProbe barrier_probe(const FiniteEnsemble& ens, std::size_t y_star, std::size_t y_prime, double a_kl,
                           double a_div, std::span<const double> eps_grid = {});

struct EntropyAudit {
    double entropy = 0.0;            // H(p)
    double embedding_entropy = 0.0;  // H of the pushforward through psi
    double diversity = 0.0;          // 1 - |E psi|^2
    double bound = 0.0;              // -log(1 - D/2)
    double margin = 0.0;             // embedding_entropy - bound
};

EntropyAudit entropy_audit(const FiniteEnsemble& ens, std::span<const double> p);

struct Check {
    std::string name;
    bool pass = false;
    nlohmann::json values;
    double tolerance = 0.0;

    nlohmann::json to_json() const;
};

struct TheoryConfig {
    std::size_t length = 8;
    std::uint64_t seed = 0;
    double alpha_kl = 0.1;
    double alpha_div = 0.05;
    double damping = 0.5;
    int random_trials = 1000;

    void validate() const;
};

/// Every check of the suite, in a fixed order.
std::vector<Check> run_suite(const TheoryConfig& cfg);

}  // namespace pzero::theory
