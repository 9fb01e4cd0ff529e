#include <chrono>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "pzero/error.hpp"
#include "pzero/theory.hpp"
#include "support.hpp"

using namespace pzero;
using namespace pzero::theory;

namespace {

std::vector<double> random_dist(std::size_t n, Rng& rng)
{
    std::vector<double> p(n);
    for (auto& v : p) {
        v = 0.05 + rng.uniform();
    }
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) {
        v /= s;
    }
    return p;
}

// J written out from scratch: E[r] - a KL - (b/2) sum p p' cos
double reference_J(const std::vector<double>& p, const FiniteEnsemble& e, double akl, double adiv)
{
    double er = 0.0, kl = 0.0, pair = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
        er += p[a] * e.reward[a];
        kl += p[a] * std::log(p[a] / e.p_ref[a]);
        for (std::size_t b = 0; b < p.size(); ++b) {
            double c = 0.0;
            for (std::size_t k = 0; k < e.psi[a].size(); ++k) {
                c += e.psi[a][k] * e.psi[b][k];
            }
            pair += p[a] * p[b] * c;
        }
    }
    return er - akl * kl - 0.5 * adiv * pair;
}

FiniteEnsemble two_point(double r0, double r1, std::vector<double> z0, std::vector<double> z1)
{
    return make_ensemble({parse_sequence("H"), parse_sequence("P")}, {0.5, 0.5}, {r0, r1}, {z0, z1});
}

}  // namespace

TEST_CASE("ensemble construction and validation")
{
    const auto e = random_ensemble(4, 3);
    CHECK(e.size() == 16);
    CHECK(std::accumulate(e.p_ref.begin(), e.p_ref.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t a = 0; a < e.size(); ++a) {
        CHECK(e.p_ref[a] > 0.0);
        CHECK(e.c(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    }
    // token-sign cosine = 1 - 2 * hamming / L
    const auto hp = parse_sequence("HPHP");
    const auto pp = parse_sequence("PPHH");
    const auto z = token_sign_embeddings(std::vector<Sequence>{hp, pp});
    double c = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        c += z[0][k] * z[1][k];
    }
    CHECK(c == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(random_ensemble(9, 0), pzero::Error);
    auto bad = e;
    bad.p_ref[0] = 0.0;
    CHECK_THROWS_AS(bad.validate(), pzero::Error);
    bad = e;
    bad.psi[1][0] *= 2.0;
    CHECK_THROWS_AS(bad.validate(), pzero::Error);
}

TEST_CASE("objective matches a direct evaluation and the mean-norm identity")
{
    const auto e = random_ensemble(5, 11);
    Rng rng(5);
    for (int k = 0; k < 50; ++k) {
        const auto p = random_dist(e.size(), rng);
        const auto o = objective_J(p, e, 0.1, 0.05);
        CHECK(o.value == doctest::Approx(reference_J(p, e, 0.1, 0.05)).epsilon(1e-12));
        CHECK(std::abs(o.pair_direct - o.pair_mean_norm) < 1e-12);
    }
}

TEST_CASE("objective boundary handling")
{
    const auto e = random_ensemble(3, 2);
    std::vector<double> p(e.size(), 0.0);
    p[2] = 1.0;
    CHECK_THROWS_AS(objective_J(p, e, 0.1, 0.05), pzero::Error);
    const auto o = objective_J_boundary(p, e, 0.1, 0.05);
    CHECK(o.kl == doctest::Approx(-std::log(e.p_ref[2])).epsilon(1e-12));
    CHECK(o.pair_direct == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Boltzmann distribution maximizes J without diversity")
{
    const auto e = random_ensemble(6, 7);
    const double akl = 0.1;
    const auto star = boltzmann(e, akl);
    // independent: p_ref exp(r / a) normalized
    std::vector<double> w(e.size());
    for (std::size_t y = 0; y < e.size(); ++y) {
        w[y] = e.p_ref[y] * std::exp(e.reward[y] / akl);
    }
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (std::size_t y = 0; y < e.size(); ++y) {
        CHECK(star[y] == doctest::Approx(w[y] / s).epsilon(1e-12));
    }
    const double j_star = objective_J(star, e, akl, 0.0).value;
    Rng rng(1);
    for (int k = 0; k < 100; ++k) {
        CHECK(j_star >= objective_J(random_dist(e.size(), rng), e, akl, 0.0).value);
    }
}

TEST_CASE("identical embeddings give a constant pairwise term")
{
    auto e = random_ensemble(4, 1);
    for (auto& z : e.psi) {
        z = e.psi.front();
    }
    e = make_ensemble(e.space, e.p_ref, e.reward, e.psi);
    Rng rng(2);
    const double adiv = 0.05;
    for (int k = 0; k < 10; ++k) {
        const auto o = objective_J(random_dist(e.size(), rng), e, 0.1, adiv);
        CHECK(std::abs(0.5 * adiv * o.pair_direct - adiv / 2) < 1e-12);
    }
}

TEST_CASE("uniform p against uniform reference has zero KL")
{
    auto e = random_ensemble(4, 1);
    e.p_ref.assign(e.size(), 1.0 / 16);
    const std::vector<double> p(e.size(), 1.0 / 16);
    CHECK(std::abs(objective_J(p, e, 0.1, 0.05).kl) < 1e-15);
}

TEST_CASE("fixed point: converged, stationary, damping-independent")
{
    const auto e = random_ensemble(8, 0);
    const auto fp = solve_fixed_point(e, 0.1, 0.05, 0.5);
    CHECK(fp.residual < 1e-10);
    CHECK(fp.stationarity < 1e-8);
    CHECK(std::accumulate(fp.p.begin(), fp.p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    // the self-consistency equation itself
    const auto phi = repulsion(fp.p, e);
    std::vector<double> w(e.size());
    for (std::size_t y = 0; y < e.size(); ++y) {
        w[y] = e.p_ref[y] * std::exp((e.reward[y] - 0.05 * phi[y]) / 0.1);
    }
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    double worst = 0.0;
    for (std::size_t y = 0; y < e.size(); ++y) {
        worst = std::max(worst, std::abs(w[y] / s - fp.p[y]));
    }
    CHECK(worst < 1e-10);

    for (double g : {0.3, 1.0}) {
        const auto other = solve_fixed_point(e, 0.1, 0.05, g);
        double d = 0.0;
        for (std::size_t y = 0; y < e.size(); ++y) {
            d = std::max(d, std::abs(other.p[y] - fp.p[y]));
        }
        CHECK(d < 1e-8);
    }
}

TEST_CASE("fixed point without diversity is the Boltzmann distribution")
{
    const auto e = random_ensemble(7, 4);
    const auto fp = solve_fixed_point(e, 0.1, 0.0);
    const auto star = boltzmann(e, 0.1);
    for (std::size_t y = 0; y < e.size(); ++y) {
        CHECK(std::abs(fp.p[y] - star[y]) < 1e-10);
    }
}

TEST_CASE("antipodal symmetric pair has the uniform fixed point")
{
    const double s = std::sqrt(0.5);
    const auto e = two_point(0.4, 0.4, {s, s}, {-s, -s});
    const auto fp = solve_fixed_point(e, 0.1, 0.05);
    CHECK(std::abs(fp.p[0] - 0.5) < 1e-12);
    CHECK(std::abs(fp.p[1] - 0.5) < 1e-12);
}

TEST_CASE("larger diversity weight never raises the mean embedding norm")
{
    const auto e = random_ensemble(6, 9);
    double prev = INFINITY;
    for (double adiv : {0.0, 0.025, 0.05, 0.1, 0.2}) {
        const auto fp = solve_fixed_point(e, 0.1, adiv);
        const double n = objective_J(fp.p, e, 0.1, adiv).pair_mean_norm;
        CHECK(n <= prev + 1e-12);
        prev = n;
    }
}

TEST_CASE("fixed point reports non-convergence")
{
    const auto e = random_ensemble(4, 1);
    try {
        solve_fixed_point(e, 0.1, 0.05, 0.5, 1e-12, 3);
        FAIL("expected a convergence error");
    } catch (const pzero::Error& err) {
        CHECK(err.kind() == ErrorKind::convergence);
        CHECK(std::string(err.what()).find("residual") != std::string::npos);
    }
    CHECK_THROWS_AS(solve_fixed_point(e, 0.0, 0.05), pzero::Error);
    CHECK_THROWS_AS(solve_fixed_point(e, 0.1, 0.05, 0.0), pzero::Error);
}

TEST_CASE("stationarity is zero at Boltzmann and positive elsewhere")
{
    const auto e = random_ensemble(4, 6);
    CHECK(stationarity(boltzmann(e, 0.1), e, 0.1, 0.0) < 1e-12);
    CHECK(stationarity(e.p_ref, e, 0.1, 0.0) > 1e-3);
}

TEST_CASE("KL barrier: quotient grows like a_kl * -log eps")
{
    const auto e = random_ensemble(6, 2);
    const double akl = 0.1;
    const auto probe = barrier_probe(e, 5, 40, akl, 0.05);
    REQUIRE(probe.rows.size() == 5);
    CHECK(probe.increasing);
    CHECK(std::abs(probe.slope - akl) / akl < 0.05);
    const double rise = probe.rows.back().quotient - probe.rows.front().quotient;
    CHECK(rise == doctest::Approx(akl * std::log(1e4)).epsilon(0.02));
    CHECK(akl * std::log(1e4) == doctest::Approx(0.921).epsilon(1e-3));
}

TEST_CASE("no-KL escape condition gives an eps-independent positive quotient")
{
    const double adiv = 0.05;
    // r' - r* + a_div (1 - c) = 0.1 - 0.0 + 0.05 * 1 with orthogonal embeddings
    const auto e = two_point(0.0, 0.1, {1.0, 0.0}, {0.0, 1.0});
    const auto probe = barrier_probe(e, 0, 1, 0.0, adiv);
    for (const auto& r : probe.rows) {
        // exact: (r' - r*) + a_div (1 - c) - a_div (1 - c) eps
        CHECK(r.quotient == doctest::Approx(0.15 - adiv * r.eps).epsilon(1e-9));
        CHECK(r.quotient > 0.0);
    }
}

TEST_CASE("no-KL equal pair has no incentive to move")
{
    const auto e = two_point(0.3, 0.3, {0.0, 1.0}, {0.0, 1.0});
    for (const auto& r : barrier_probe(e, 0, 1, 0.0, 0.05).rows) {
        CHECK(std::abs(r.quotient) < 1e-9);
    }
}

TEST_CASE("entropy audit endpoints")
{
    const auto e = random_ensemble(3, 0);
    std::vector<double> delta(e.size(), 0.0);
    delta[5] = 1.0;
    const auto a = entropy_audit(e, delta);
    CHECK(a.entropy == 0.0);
    CHECK(a.embedding_entropy == 0.0);
    CHECK(std::abs(a.diversity) < 1e-12);
    CHECK(std::abs(a.bound) < 1e-12);

    const auto pair = two_point(0.0, 0.0, {0.0, 1.0}, {0.0, -1.0});
    const auto b = entropy_audit(pair, std::vector<double>{0.5, 0.5});
    CHECK(b.diversity == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.bound == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(b.entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(std::abs(b.margin) < 1e-12);
}

TEST_CASE("entropy bound holds on random ensembles and embeddings")
{
    Rng rng(17);
    const auto base = random_ensemble(4, 3);
    for (int k = 0; k < 1000; ++k) {
        std::vector<std::vector<double>> psi(base.size());
        for (auto& z : psi) {
            z = {rng.normal(), rng.normal()};
            const double s = std::hypot(z[0], z[1]);
            z[0] /= s;
            z[1] /= s;
        }
        const auto e = make_ensemble(base.space, base.p_ref, base.reward, psi);
        const auto a = entropy_audit(e, random_dist(e.size(), rng));
        CHECK(a.margin >= -1e-12);
        CHECK(a.bound <= std::log(2.0) + 1e-12);
    }
}

TEST_CASE("concavity of J with a KL term")
{
    const auto e = random_ensemble(5, 8);
    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
        const auto p = random_dist(e.size(), rng);
        const auto q = random_dist(e.size(), rng);
        const double t = 0.01 + 0.98 * rng.uniform();
        std::vector<double> m(e.size());
        for (std::size_t y = 0; y < e.size(); ++y) {
            m[y] = t * p[y] + (1 - t) * q[y];
        }
        const double lhs = objective_J(m, e, 0.1, 0.05).value;
        const double rhs = t * objective_J(p, e, 0.1, 0.05).value + (1 - t) * objective_J(q, e, 0.1, 0.05).value;
        CHECK(lhs >= rhs - 1e-10);
    }
}

TEST_CASE("policy embeddings can replace the token-sign map")
{
    auto e = random_ensemble(4, 1);
    const auto params = testing::small_params(4, 3);
    use_policy_embeddings(e, params, policy::Condition::masked_condition());
    for (std::size_t y = 0; y < e.size(); ++y) {
        double n = 0.0;
        for (double v : e.psi[y]) {
            n += v * v;
        }
        CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
    }
    const auto fp = solve_fixed_point(e, 0.1, 0.05);
    CHECK(fp.stationarity < 1e-8);
}

TEST_CASE("full suite passes on defaults within a minute")
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto checks = run_suite(TheoryConfig{});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(checks.size() >= 15);
    for (const auto& c : checks) {
        INFO(c.name << " " << c.values.dump());
        CHECK(c.pass);
        const auto j = c.to_json();
        CHECK(j.contains("name"));
        CHECK(j.contains("pass"));
        CHECK(j.contains("values"));
        CHECK(j.contains("tolerance"));
    }
    CHECK(secs < 60.0);
}

TEST_CASE("theory config validation")
{
    TheoryConfig c;
    c.length = 9;
    CHECK_THROWS_AS(run_suite(c), pzero::Error);
    c = {};
    c.alpha_kl = 0.0;
    CHECK_THROWS_AS(run_suite(c), pzero::Error);
}
