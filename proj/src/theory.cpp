#include "pzero/theory.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "pzero/diversity.hpp"
#include "pzero/error.hpp"
#include "pzero/rng.hpp"

namespace pzero::theory {

namespace {

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

std::vector<double> normalized(std::vector<double> w)
{
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) {
        v /= s;
    }
    return w;
}

std::vector<double> random_simplex(std::size_t n, Rng& rng, double sharpness = 1.0)
{
    std::vector<double> w(n);
    for (auto& v : w) {
        v = std::pow(-std::log(1.0 - rng.uniform()), sharpness) + 1e-300;
    }
    return normalized(std::move(w));
}

std::vector<Sequence> binary_space(std::size_t length)
{
    require(length >= 1 && length <= 8, ErrorKind::capacity, "finite ensembles are limited to L <= 8");
    std::vector<Sequence> space;
    for (std::uint32_t m = 0; m < (1u << length); ++m) {
        space.push_back(from_hydrophobic_mask(m, length));
    }
    return space;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

}  // namespace

void FiniteEnsemble::validate() const
{
    const auto n = space.size();
    require(n >= 2 && p_ref.size() == n && reward.size() == n && psi.size() == n && kernel.size() == n * n,
            ErrorKind::domain, "ensemble pieces have inconsistent sizes");
    double s = 0.0;
    for (auto v : p_ref) {
        require(v > 0.0, ErrorKind::domain, "reference distribution must be strictly positive");
        s += v;
    }
    require(std::abs(s - 1.0) < 1e-9, ErrorKind::domain, "reference distribution must sum to one");
    for (const auto& z : psi) {
        require(std::abs(std::sqrt(dot(z, z)) - 1.0) < 1e-9, ErrorKind::domain, "embeddings must be unit vectors");
    }
}

std::vector<std::vector<double>> token_sign_embeddings(std::span<const Sequence> space)
{
    std::vector<std::vector<double>> out;
    for (const auto& y : space) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(y.size()));
        std::vector<double> z;
        for (auto t : y.tokens) {
            z.push_back(t == 0 ? inv : -inv);
        }
        out.push_back(std::move(z));
    }
    return out;
}

FiniteEnsemble make_ensemble(std::vector<Sequence> space, std::vector<double> p_ref, std::vector<double> reward,
                             std::vector<std::vector<double>> psi)
{
    FiniteEnsemble e;
    e.length = space.empty() ? 0 : space.front().size();
    e.space = std::move(space);
    e.p_ref = std::move(p_ref);
    e.reward = std::move(reward);
    e.psi = std::move(psi);
    const auto n = e.psi.size();
    e.kernel.assign(n * n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            e.kernel[a * n + b] = dot(e.psi[a], e.psi[b]);
        }
    }
    e.validate();
    return e;
}

FiniteEnsemble random_ensemble(std::size_t length, std::uint64_t seed)
{
    auto space = binary_space(length);
    Rng rng(derive_seed(seed, "theory/ensemble"));
    auto p_ref = random_simplex(space.size(), rng);
    std::vector<double> reward(space.size());
    for (auto& r : reward) {
        r = rng.uniform();
    }
    auto psi = token_sign_embeddings(space);
    return make_ensemble(std::move(space), std::move(p_ref), std::move(reward), std::move(psi));
}

void use_policy_embeddings(FiniteEnsemble& ens, const policy::PolicyParams& params, const policy::Condition& cond)
{
    for (std::size_t i = 0; i < ens.size(); ++i) {
        const auto lp = policy::log_prob(params, cond, ens.space[i]);
        const std::vector<double> mask(lp.hidden.size(), 1.0);
        ens.psi[i] = policy::pooled_embedding(lp.hidden, mask);
    }
    ens = make_ensemble(std::move(ens.space), std::move(ens.p_ref), std::move(ens.reward), std::move(ens.psi));
}

std::vector<double> repulsion(std::span<const double> p, const FiniteEnsemble& ens)
{
    const auto n = ens.size();
    std::vector<double> phi(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        const double* row = ens.kernel.data() + a * n;
        double s = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            s += p[b] * row[b];
        }
        phi[a] = s;
    }
    return phi;
}

namespace {

Objective evaluate(std::span<const double> p, const FiniteEnsemble& ens, double a_kl, double a_div, bool strict)
{
    require(p.size() == ens.size(), ErrorKind::domain, "distribution size does not match the ensemble");
    Objective o;
    for (std::size_t y = 0; y < p.size(); ++y) {
        require(p[y] >= 0.0, ErrorKind::domain, "negative probability");
        o.expected_reward += p[y] * ens.reward[y];
        if (p[y] > 0.0) {
            o.kl += p[y] * std::log(p[y] / ens.p_ref[y]);
        } else {
            require(!strict || a_kl == 0.0, ErrorKind::domain, "KL term needs a strictly positive distribution");
        }
    }
    const auto phi = repulsion(p, ens);
    o.pair_direct = dot(p, phi);
    std::vector<double> mean(ens.psi.front().size(), 0.0);
    for (std::size_t y = 0; y < p.size(); ++y) {
        for (std::size_t k = 0; k < mean.size(); ++k) {
            mean[k] += p[y] * ens.psi[y][k];
        }
    }
    o.pair_mean_norm = dot(mean, mean);
    o.value = o.expected_reward - a_kl * o.kl - 0.5 * a_div * o.pair_direct;
    return o;
}

}  // namespace

Objective objective_J(std::span<const double> p, const FiniteEnsemble& ens, double a_kl, double a_div)
{
    return evaluate(p, ens, a_kl, a_div, true);
}

Objective objective_J_boundary(std::span<const double> p, const FiniteEnsemble& ens, double a_kl, double a_div)
{
    return evaluate(p, ens, a_kl, a_div, false);
}

namespace {

// normalize(p_ref exp(s / a_kl)) computed in log space
std::vector<double> gibbs(const FiniteEnsemble& ens, std::span<const double> score, double a_kl)
{
    std::vector<double> logw(ens.size());
    for (std::size_t y = 0; y < ens.size(); ++y) {
        logw[y] = std::log(ens.p_ref[y]) + score[y] / a_kl;
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    std::vector<double> w(ens.size());
    for (std::size_t y = 0; y < ens.size(); ++y) {
        w[y] = std::exp(logw[y] - top);
    }
    return normalized(std::move(w));
}

}  // namespace

std::vector<double> boltzmann(const FiniteEnsemble& ens, double a_kl)
{
    require(a_kl > 0.0, ErrorKind::domain, "Boltzmann distribution needs a_kl > 0");
    return gibbs(ens, ens.reward, a_kl);
}

double stationarity(std::span<const double> p, const FiniteEnsemble& ens, double a_kl, double a_div)
{
    const auto phi = repulsion(p, ens);
    std::vector<double> g(p.size());
    for (std::size_t y = 0; y < p.size(); ++y) {
        require(p[y] > 0.0, ErrorKind::domain, "stationarity needs an interior point");
        g[y] = ens.reward[y] - a_kl * (std::log(p[y] / ens.p_ref[y]) + 1.0) - a_div * phi[y];
    }
    const double mean = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    double m = 0.0;
    for (auto v : g) {
        m = std::max(m, std::abs(v - mean));
    }
    return m;
}

FixedPoint solve_fixed_point(const FiniteEnsemble& ens, double a_kl, double a_div, double damping, double tolerance,
                             int max_iterations)
{
    require(a_kl > 0.0, ErrorKind::domain, "fixed point needs a_kl > 0");
    require(damping > 0.0 && damping <= 1.0, ErrorKind::config, "damping must lie in (0, 1]");
    FixedPoint fp;
    fp.p = ens.p_ref;
    std::vector<double> score(ens.size());
    for (int it = 1; it <= max_iterations; ++it) {
        const auto phi = repulsion(fp.p, ens);
        for (std::size_t y = 0; y < ens.size(); ++y) {
            score[y] = ens.reward[y] - a_div * phi[y];
        }
        const auto next = gibbs(ens, score, a_kl);
        fp.residual = max_abs_diff(next, fp.p);
        fp.residual_trace.push_back(fp.residual);
        fp.iterations = it;
        if (fp.residual < tolerance) {
            fp.p = next;
            fp.stationarity = stationarity(fp.p, ens, a_kl, a_div);
            return fp;
        }
        for (std::size_t y = 0; y < ens.size(); ++y) {
            fp.p[y] = (1.0 - damping) * fp.p[y] + damping * next[y];
        }
    }
    std::string trace;
    const std::size_t n = fp.residual_trace.size();
    for (std::size_t k = n > 8 ? n - 8 : 0; k < n; ++k) {
        trace += " " + std::to_string(fp.residual_trace[k]);
    }
    fail(ErrorKind::convergence, "fixed-point iteration did not converge in " + std::to_string(max_iterations) +
                                     " iterations; last residuals:" + trace);
}

BarrierProbe barrier_probe(const FiniteEnsemble& ens, std::size_t y_star, std::size_t y_prime, double a_kl,
                           double a_div, std::span<const double> eps_grid)
{
    require(y_star < ens.size() && y_prime < ens.size() && y_star != y_prime, ErrorKind::domain,
            "barrier probe needs two distinct sequences");
    static const std::vector<double> default_grid{1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
    if (eps_grid.empty()) {
        eps_grid = default_grid;
    }
    std::vector<double> delta(ens.size(), 0.0);
    delta[y_star] = 1.0;
    const double base = objective_J_boundary(delta, ens, a_kl, a_div).value;
    BarrierProbe probe;
    for (double e : eps_grid) {
        auto p = delta;
        p[y_star] = 1.0 - e;
        p[y_prime] = e;
        probe.rows.push_back({e, (objective_J_boundary(p, ens, a_kl, a_div).value - base) / e});
    }
    // least squares of quotient on x = -log eps
    const double n = static_cast<double>(probe.rows.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& r : probe.rows) {
        const double x = -std::log(r.eps);
        sx += x;
        sy += r.quotient;
        sxx += x * x;
        sxy += x * r.quotient;
    }
    probe.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    probe.intercept = (sy - probe.slope * sx) / n;
    std::vector<BarrierRow> by_eps = probe.rows;
    std::sort(by_eps.begin(), by_eps.end(), [](const auto& a, const auto& b) { return a.eps > b.eps; });
    probe.increasing = true;
    for (std::size_t k = 1; k < by_eps.size(); ++k) {
        probe.increasing = probe.increasing && by_eps[k].quotient > by_eps[k - 1].quotient;
    }
    return probe;
}

EntropyAudit entropy_audit(const FiniteEnsemble& ens, std::span<const double> p)
{
    require(p.size() == ens.size(), ErrorKind::domain, "distribution size does not match the ensemble");
    EntropyAudit a;
    std::map<std::vector<double>, double> pushforward;
    std::vector<double> mean(ens.psi.front().size(), 0.0);
    for (std::size_t y = 0; y < p.size(); ++y) {
        if (p[y] > 0.0) {
            a.entropy -= p[y] * std::log(p[y]);
        }
        pushforward[ens.psi[y]] += p[y];
        for (std::size_t k = 0; k < mean.size(); ++k) {
            mean[k] += p[y] * ens.psi[y][k];
        }
    }
    for (const auto& [z, q] : pushforward) {
        if (q > 0.0) {
            a.embedding_entropy -= q * std::log(q);
        }
    }
    a.diversity = 1.0 - dot(mean, mean);
    a.bound = diversity::entropy_lower_bound(a.diversity).entropy;
    a.margin = a.embedding_entropy - a.bound;
    return a;
}

nlohmann::json Check::to_json() const
{
    return {{"name", name}, {"pass", pass}, {"values", values}, {"tolerance", tolerance}};
}

void TheoryConfig::validate() const
{
    require(length >= 1 && length <= 8, ErrorKind::capacity, "theory ensembles are limited to L <= 8");
    require(alpha_kl > 0.0 && alpha_div >= 0.0, ErrorKind::config, "theory needs alpha_kl > 0 and alpha_div >= 0");
    require(damping > 0.0 && damping <= 1.0, ErrorKind::config, "damping must lie in (0, 1]");
    require(random_trials >= 1, ErrorKind::config, "random_trials must be positive");
}

std::vector<Check> run_suite(const TheoryConfig& cfg)
{
    cfg.validate();
    const double akl = cfg.alpha_kl;
    const double adiv = cfg.alpha_div;
    const auto ens = random_ensemble(cfg.length, cfg.seed);
    const auto n = ens.size();
    Rng rng(derive_seed(cfg.seed, "theory/trials"));
    std::vector<Check> out;

    {
        double worst = 0.0;
        for (int k = 0; k < 200; ++k) {
            const auto p = random_simplex(n, rng, 1.0 + 3.0 * rng.uniform());
            const auto o = objective_J(p, ens, akl, adiv);
            worst = std::max(worst, std::abs(o.pair_direct - o.pair_mean_norm));
        }
        out.push_back({"lemma_pair_term_equals_mean_norm", worst < 1e-12, {{"max_abs_diff", worst}}, 1e-12});
    }
    {
        const auto star = boltzmann(ens, akl);
        const double j_star = objective_J(star, ens, akl, 0.0).value;
        double gap = INFINITY;
        for (int k = 0; k < 100; ++k) {
            const auto q = random_simplex(n, rng, 1.0 + 3.0 * rng.uniform());
            gap = std::min(gap, j_star - objective_J(q, ens, akl, 0.0).value);
        }
        out.push_back({"boltzmann_is_global_max_without_diversity", gap >= 0.0, {{"min_gap", gap}}, 0.0});
    }
    {
        auto same = ens;
        for (auto& z : same.psi) {
            z = same.psi.front();
        }
        same = make_ensemble(same.space, same.p_ref, same.reward, same.psi);
        const auto p = random_simplex(n, rng);
        const auto o = objective_J(p, same, akl, adiv);
        const double term = 0.5 * adiv * o.pair_direct;
        const bool ok = std::abs(term - 0.5 * adiv) < 1e-12;
        out.push_back({"identical_embeddings_pair_term", ok, {{"pair_term", term}, {"expected", 0.5 * adiv}}, 1e-12});
    }
    {
        auto flat = ens;
        flat.p_ref.assign(n, 1.0 / static_cast<double>(n));
        const std::vector<double> p(n, 1.0 / static_cast<double>(n));
        const double kl = objective_J(p, flat, akl, adiv).kl;
        out.push_back({"uniform_kl_zero", std::abs(kl) < 1e-12, {{"kl", kl}}, 1e-12});
    }
    {
        const auto fp = solve_fixed_point(ens, akl, adiv, cfg.damping);
        const bool ok = fp.residual < 1e-10 && fp.stationarity < 1e-8;
        out.push_back({"fixed_point_converges_and_is_stationary",
                       ok,
                       {{"residual", fp.residual}, {"stationarity", fp.stationarity}, {"iterations", fp.iterations}},
                       1e-8});
    }
    {
        const auto fp = solve_fixed_point(ens, akl, 0.0, cfg.damping);
        const double d = max_abs_diff(fp.p, boltzmann(ens, akl));
        out.push_back({"fixed_point_without_diversity_is_boltzmann", d < 1e-10, {{"max_abs_diff", d}}, 1e-10});
    }
    {
        const double inv = 1.0 / std::sqrt(2.0);
        const auto two = make_ensemble({parse_sequence("H"), parse_sequence("P")}, {0.5, 0.5}, {0.3, 0.3},
                                       {{inv, inv}, {-inv, -inv}});
        const auto fp = solve_fixed_point(two, akl, adiv, cfg.damping);
        const double d = std::max(std::abs(fp.p[0] - 0.5), std::abs(fp.p[1] - 0.5));
        out.push_back({"antipodal_pair_fixed_point_is_uniform", d < 1e-12, {{"max_abs_diff", d}}, 1e-12});
    }
    {
        std::vector<std::vector<double>> sols;
        for (double g : {0.3, 0.5, 1.0}) {
            sols.push_back(solve_fixed_point(ens, akl, adiv, g).p);
        }
        const double d = std::max(max_abs_diff(sols[0], sols[1]), max_abs_diff(sols[0], sols[2]));
        out.push_back({"fixed_point_independent_of_damping", d < 1e-8, {{"max_abs_diff", d}}, 1e-8});
    }
    {
        std::vector<double> norms;
        for (double s : {0.0, 0.5, 1.0, 2.0, 4.0}) {
            const auto fp = solve_fixed_point(ens, akl, s * adiv, cfg.damping);
            norms.push_back(objective_J(fp.p, ens, akl, s * adiv).pair_mean_norm);
        }
        bool ok = true;
        for (std::size_t k = 1; k < norms.size(); ++k) {
            ok = ok && norms[k] <= norms[k - 1] + 1e-12;
        }
        out.push_back({"mean_embedding_norm_decreases_with_alpha_div", ok, {{"norms", norms}}, 1e-12});
    }
    {
        double worst = INFINITY;
        for (int k = 0; k < cfg.random_trials; ++k) {
            const auto p = random_simplex(n, rng, 1.0 + 2.0 * rng.uniform());
            const auto q = random_simplex(n, rng, 1.0 + 2.0 * rng.uniform());
            const double t = 0.01 + 0.98 * rng.uniform();
            std::vector<double> mix(n);
            for (std::size_t y = 0; y < n; ++y) {
                mix[y] = t * p[y] + (1.0 - t) * q[y];
            }
            const double gap = objective_J(mix, ens, akl, adiv).value -
                               (t * objective_J(p, ens, akl, adiv).value + (1.0 - t) * objective_J(q, ens, akl, adiv).value);
            worst = std::min(worst, gap);
        }
        out.push_back({"objective_is_concave", worst >= -1e-10, {{"min_gap", worst}}, 1e-10});
    }
    {
        const auto probe = barrier_probe(ens, 0, n - 1, akl, adiv);
        const double rel = std::abs(probe.slope - akl) / akl;
        const double rise = probe.rows.back().quotient - probe.rows.front().quotient;
        const double expected = akl * std::log(1e4);
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : probe.rows) {
            rows.push_back({{"eps", r.eps}, {"quotient", r.quotient}});
        }
        out.push_back({"kl_barrier_slope",
                       rel < 0.05 && probe.increasing && std::abs(rise - expected) < 0.05 * expected,
                       {{"slope", probe.slope},
                        {"alpha_kl", akl},
                        {"relative_error", rel},
                        {"rise", rise},
                        {"expected_rise", expected},
                        {"rows", rows}},
                       0.05});
    }
    {
        // no KL: the quotient tends to r' - r* + a_div (1 - c) at rate O(eps)
        std::size_t ys = 0, yp = 1;
        double best = -INFINITY;
        for (std::size_t b = 1; b < n; ++b) {
            const double lim = ens.reward[b] - ens.reward[0] + adiv * (1.0 - ens.c(0, b));
            if (lim > best) {
                best = lim;
                yp = b;
            }
        }
        const auto probe = barrier_probe(ens, ys, yp, 0.0, adiv);
        bool ok = best > 0.0;
        double worst = 0.0;
        for (const auto& r : probe.rows) {
            const double dev = std::abs(r.quotient - best);
            worst = std::max(worst, dev / r.eps);
            ok = ok && r.quotient > 0.0 && dev <= 2.0 * std::max(adiv, 1e-12) * r.eps + 1e-9;
        }
        out.push_back({"no_kl_finite_escape_condition", ok, {{"limit", best}, {"max_dev_over_eps", worst}}, 0.0});
    }
    {
        const auto pair = make_ensemble({parse_sequence("H"), parse_sequence("P")}, {0.5, 0.5}, {0.7, 0.7},
                                        {{1.0, 0.0}, {1.0, 0.0}});
        const auto probe = barrier_probe(pair, 0, 1, 0.0, adiv);
        double worst = 0.0;
        for (const auto& r : probe.rows) {
            worst = std::max(worst, std::abs(r.quotient));
        }
        out.push_back({"no_kl_no_incentive_for_equal_pair", worst < 1e-9, {{"max_abs_quotient", worst}}, 1e-9});
    }
    {
        std::vector<double> delta(n, 0.0);
        delta[3] = 1.0;
        const auto a = entropy_audit(ens, delta);
        const bool ok = a.entropy == 0.0 && std::abs(a.diversity) < 1e-12 && std::abs(a.bound) < 1e-12;
        out.push_back({"entropy_bound_point_mass", ok, {{"entropy", a.entropy}, {"bound", a.bound}}, 1e-12});
    }
    {
        const auto pair = make_ensemble({parse_sequence("H"), parse_sequence("P")}, {0.5, 0.5}, {0.0, 0.0},
                                        {{1.0, 0.0}, {-1.0, 0.0}});
        const auto a = entropy_audit(pair, std::vector<double>{0.5, 0.5});
        const bool ok = std::abs(a.diversity - 1.0) < 1e-12 && std::abs(a.bound - std::log(2.0)) < 1e-12 &&
                        std::abs(a.entropy - std::log(2.0)) < 1e-12;
        out.push_back({"entropy_bound_tight_on_antipodal_pair",
                       ok,
                       {{"entropy", a.entropy}, {"bound", a.bound}, {"diversity", a.diversity}},
                       1e-12});
    }
    {
        double worst = INFINITY;
        double top = 0.0;
        for (int k = 0; k < cfg.random_trials; ++k) {
            // random unit embeddings in R^3, with repeats so the pushforward is not injective
            std::vector<std::vector<double>> atoms(4 + rng.below(12));
            for (auto& z : atoms) {
                z = {rng.normal(), rng.normal(), rng.normal()};
                const double s = std::sqrt(dot(z, z));
                for (auto& v : z) {
                    v /= s;
                }
            }
            std::vector<std::vector<double>> psi(n);
            for (auto& z : psi) {
                z = atoms[rng.below(atoms.size())];
            }
            const auto e = make_ensemble(ens.space, ens.p_ref, ens.reward, std::move(psi));
            const auto p = random_simplex(n, rng, 1.0 + 6.0 * rng.uniform());
            const auto a = entropy_audit(e, p);
            worst = std::min({worst, a.margin, a.entropy - a.bound});
            top = std::max(top, a.bound);
        }
        const bool ok = worst >= -1e-12 && top <= std::log(2.0) + 1e-12;
        out.push_back({"entropy_bound_random_ensembles",
                       ok,
                       {{"min_margin", worst}, {"max_bound", top}, {"trials", cfg.random_trials}},
                       1e-12});
    }
    return out;
}

}  // namespace pzero::theory
