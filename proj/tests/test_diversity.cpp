#include <cmath>

#include "doctest.h"
#include "pzero/diversity.hpp"
#include "pzero/error.hpp"
#include "pzero/rng.hpp"

using namespace pzero;
using diversity::Embedding;

namespace {

Embedding unit(std::vector<double> v)
{
    double n = 0.0;
    for (double x : v) n += x * x;
    for (double& x : v) x /= std::sqrt(n);
    return v;
}

Embedding random_unit(Rng& rng, std::size_t dim)
{
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    return unit(v);
}

double cosine(const Embedding& a, const Embedding& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("d_cos examples")
{
    const Embedding a = unit({1, 2, 3});
    CHECK(diversity::d_cos(std::vector<Embedding>{a, a, a}) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(diversity::d_cos(std::vector<Embedding>{{1, 0}, {0, 1}}) == 1.0);
    CHECK_THROWS_AS(diversity::d_cos(std::vector<Embedding>{a}), Error);

    const std::vector<Embedding> orth{{1, 0}, {0, 1}};
    const auto est = diversity::d_cos_offdiag_estimate(orth);
    CHECK(est.mean_cos == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(est.diversity == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("all-pairs D_cos equals the off-diagonal estimator")
{
    Rng rng(17);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t m = 2 + rng.next() % 12, dim = 1 + rng.next() % 8;
        std::vector<Embedding> z;
        for (std::size_t i = 0; i < m; ++i) z.push_back(random_unit(rng, dim));
        // brute-force pair average
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j) s += cosine(z[i], z[j]);
        const double brute = 1.0 - s / (m * (m - 1) / 2.0);
        worst = std::max(worst, std::abs(diversity::d_cos(z) - brute));
        worst = std::max(worst, std::abs(diversity::d_cos_offdiag_estimate(z).diversity - diversity::d_cos(z)));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("population identity E[cos] = |E z|^2 by Monte Carlo")
{
    // fixed distribution: four unit vectors with weights
    const std::vector<Embedding> atoms{unit({1, 0, 0}), unit({1, 1, 0}), unit({0, 1, 1}), unit({-1, 0, 2})};
    const std::vector<double> w{0.4, 0.3, 0.2, 0.1};
    Embedding mean(3, 0.0);
    for (std::size_t k = 0; k < atoms.size(); ++k)
        for (int i = 0; i < 3; ++i) mean[i] += w[k] * atoms[k][i];
    const double identity = cosine(mean, mean);

    Rng rng(2024);
    auto draw = [&] {
        double u = rng.uniform(), c = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            c += w[k];
            if (u < c) return k;
        }
        return w.size() - 1;
    };
    double s = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += cosine(atoms[draw()], atoms[draw()]);
    CHECK(std::abs(s / n - identity) < 0.01);
}

TEST_CASE("d_cos gradient against finite differences in embedding space")
{
    Rng rng(5);
    std::vector<Embedding> z;
    for (int i = 0; i < 5; ++i) z.push_back(random_unit(rng, 4));
    const auto g = diversity::d_cos_grad(z);
    const double h = 1e-6;
    for (std::size_t i = 0; i < z.size(); ++i) {
        for (std::size_t k = 0; k < 4; ++k) {
            auto up = z, down = z;
            up[i][k] += h;
            down[i][k] -= h;
            const double fd = (diversity::d_cos(up) - diversity::d_cos(down)) / (2 * h);
            CHECK(std::abs(fd - g[i][k]) < 1e-7);
        }
    }
}

TEST_CASE("entropy lower bound")
{
    CHECK(diversity::entropy_lower_bound(0.0).entropy == 0.0);
    CHECK(diversity::entropy_lower_bound(0.0).perplexity == 1.0);
    CHECK(diversity::entropy_lower_bound(1.0).entropy == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(diversity::entropy_lower_bound(1.0).perplexity == doctest::Approx(2.0));
    for (double d = 0.0; d <= 2.0; d += 0.01) {
        const auto b = diversity::entropy_lower_bound(std::min(d, 1.0));
        CHECK(b.entropy <= std::log(2.0) + 1e-15);
    }
    // the m = 2 truncation keeps the bound finite
    CHECK(std::isfinite(diversity::entropy_lower_bound(2.0).entropy));
}

TEST_CASE("hamming diversity")
{
    const auto hp = parse_sequence("HP"), ph = parse_sequence("PH"), hh = parse_sequence("HH");
    CHECK(diversity::hamming_diversity(std::vector<Sequence>{hp, hp}) == 0.0);
    CHECK(diversity::hamming_diversity(std::vector<Sequence>{hp, ph}) == 1.0);
    CHECK(diversity::hamming_diversity(std::vector<Sequence>{hp, ph, hh}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(diversity::hamming_diversity(std::vector<Sequence>{hp}), Error);
    CHECK_THROWS_AS(diversity::hamming_diversity(std::vector<Sequence>{hp, parse_sequence("HPH")}), Error);
    CHECK(diversity::distinct_count(std::vector<Sequence>{hp, ph, hp}) == 2);

    const auto rest = diversity::hamming_distance_to_rest(std::vector<Sequence>{hp, ph, hh});
    CHECK(rest[0] == doctest::Approx(0.75));
    CHECK(rest[2] == doctest::Approx(0.5));
}
