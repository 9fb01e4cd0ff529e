#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "pzero/error.hpp"
#include "pzero/lattice.hpp"
#include "support.hpp"

using namespace pzero;
using namespace pzero::lattice;

namespace {

// Independent brute force: every walk from the origin, reduced under the 8
// lattice symmetries (optionally also reversal) by our own canonicalizer.
using Path = std::vector<std::pair<int, int>>;

Path image(const Path& w, int sym)
{
    Path out;
    for (auto [x, y] : w) {
        int a = x, b = y;
        if (sym & 4) std::swap(a, b);
        if (sym & 1) a = -a;
        if (sym & 2) b = -b;
        out.emplace_back(a, b);
    }
    const auto [x0, y0] = out.front();
    for (auto& p : out) {
        p.first -= x0;
        p.second -= y0;
    }
    return out;
}

Path canon(const Path& w, bool with_reversal)
{
    Path best = image(w, 0);
    for (int rev = 0; rev < (with_reversal ? 2 : 1); ++rev) {
        Path base = w;
        if (rev) std::reverse(base.begin(), base.end());
        for (int s = 0; s < 8; ++s) {
            best = std::min(best, image(base, s));
        }
    }
    return best;
}

void extend(Path& w, int n, std::vector<Path>& out)
{
    if (static_cast<int>(w.size()) == n) {
        out.push_back(w);
        return;
    }
    static const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
    for (int d = 0; d < 4; ++d) {
        std::pair<int, int> next{w.back().first + dx[d], w.back().second + dy[d]};
        if (std::find(w.begin(), w.end(), next) != w.end()) continue;
        w.push_back(next);
        extend(w, n, out);
        w.pop_back();
    }
}

std::set<Path> classes(int n, bool with_reversal)
{
    std::vector<Path> all;
    Path w{{0, 0}};
    extend(w, n, all);
    std::set<Path> out;
    for (const auto& p : all) out.insert(canon(p, with_reversal));
    return out;
}

}  // namespace

TEST_CASE("shape and state counts agree with brute-force enumeration")
{
    for (int n = 2; n <= 9; ++n) {
        CAPTURE(n);
        CHECK(enumerate_conformations(n).size() == classes(n, true).size());
        CHECK(FoldSpace::get(n).state_count() == classes(n, false).size());
        CHECK(FoldSpace::get(n).shape_count() == classes(n, true).size());
    }
}

TEST_CASE("tiny chains")
{
    CHECK(enumerate_conformations(2).size() == 1);
    CHECK(enumerate_conformations(3).size() == 2);  // straight and bent
    for (const auto& c : enumerate_conformations(8)) {
        CHECK(is_self_avoiding_walk(c.coords()));
    }
    CHECK_THROWS_AS(enumerate_conformations(17), Error);
    try {
        enumerate_conformations(20);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::capacity);
    }
    CHECK_FALSE(is_self_avoiding_walk(Walk{{0, 0}, {1, 0}, {0, 0}}));
    CHECK_FALSE(is_self_avoiding_walk(Walk{{0, 0}, {2, 0}}));
}

TEST_CASE("energy examples")
{
    const Conformation bend(testing::u_bend());
    CHECK(energy(parse_sequence("HPPH"), bend) == -1);
    CHECK(energy(parse_sequence("PPPP"), bend) == 0);
    const Conformation line(Walk{{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}});
    CHECK(energy(parse_sequence("HHHHH"), line) == 0);
}

TEST_CASE("energy matches brute-force contact count")
{
    pzero::Rng rng(5);
    for (const auto& c : enumerate_conformations(9)) {
        Path p;
        for (auto q : c.coords()) p.emplace_back(q.x, q.y);
        const auto y = from_hydrophobic_mask(static_cast<std::uint32_t>(rng.next() & 0x1ff), 9);
        int e = 0;
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t j = i + 2; j < 9; ++j)
                if (y[i] == 0 && y[j] == 0 &&
                    std::abs(p[i].first - p[j].first) + std::abs(p[i].second - p[j].second) == 1)
                    --e;
        REQUIRE(energy(y, c) == e);
    }
}

TEST_CASE("fold histogram and folding free energy against brute force")
{
    const int n = 8;
    const auto states = classes(n, false);
    const auto& space = FoldSpace::get(n);
    for (std::uint32_t mask : {0x00u, 0x81u, 0x99u, 0xa5u, 0xffu, 0x3cu}) {
        CAPTURE(mask);
        const auto y = from_hydrophobic_mask(mask, n);
        std::map<int, std::uint64_t> hist;
        for (const auto& w : states) {
            int e = 0;
            for (int i = 0; i < n; ++i)
                for (int j = i + 2; j < n; ++j)
                    if (y[i] == 0 && y[j] == 0 &&
                        std::abs(w[i].first - w[j].first) + std::abs(w[i].second - w[j].second) == 1)
                        --e;
            ++hist[e];
        }
        const auto& fs = space.fold(mask);
        CHECK(fs.min_energy == hist.begin()->first);
        CHECK(fs.ground_states.size() == hist.begin()->second);
        for (std::size_t k = 0; k < fs.histogram.size(); ++k) {
            CHECK(fs.histogram[k] == hist[-static_cast<int>(k)]);
        }
        // dG into one arbitrary state
        const std::size_t s = 17;
        int e_s = 0;
        for (auto [i, j] : space.contacts(s)) e_s -= (y[i] == 0 && y[j] == 0) ? 1 : 0;
        const double T = 0.5;
        double z_rest = 0.0;
        for (auto [e, cnt] : hist) z_rest += static_cast<double>(cnt) * std::exp(-e / T);
        z_rest -= std::exp(-e_s / T);
        CHECK(folding_dG(space, y, s, T) == doctest::Approx(-T * (-e_s / T - std::log(z_rest))).epsilon(1e-12));
    }
}

TEST_CASE("structure match")
{
    const auto& d = testing::cached_dataset(11, 3, 2);
    for (const auto& t : d.targets) {
        CHECK(structure_match(t, t.wild_type) == 1.0);
        // all-P: every conformation is a ground state, including the target
        const auto allp = parse_sequence(std::string(11, 'P'));
        CHECK(structure_match(t, allp) == 1.0);
        CHECK(is_degenerate(allp));
        CHECK_FALSE(is_degenerate(t.wild_type));
    }
    CHECK_THROWS_AS(structure_match(d.targets[0], parse_sequence("HPH")), Error);
}

TEST_CASE("structure match of one half, found by exhaustive search at L = 8")
{
    const int n = 8;
    const auto& space = FoldSpace::get(n);
    bool found = false;
    for (std::size_t s = 0; s < space.state_count() && !found; ++s) {
        const auto native = space.contacts(s);
        if (native.size() != 2) continue;
        for (std::uint32_t mask = 0; mask < 256 && !found; ++mask) {
            const auto& fs = space.fold(mask);
            if (fs.ground_states.size() != 1) continue;
            const auto g = space.contacts(fs.ground_states[0]);
            int shared = 0;
            for (auto c : g) shared += std::count(native.begin(), native.end(), c) > 0;
            if (shared != 1) continue;
            const auto y = from_hydrophobic_mask(mask, n);
            const auto t = make_target("half", space.walk(s), y);
            CHECK(structure_match(t, y) == 0.5);
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("oracle ddG")
{
    const auto& d = testing::cached_dataset(11, 3, 2);
    const auto& t = d.targets[0];
    CHECK(oracle_ddG(t, t.wild_type) == 0.0);

    const auto& space = FoldSpace::get(11);
    const double n_conf = static_cast<double>(space.state_count());
    for (double T : {0.25, 0.5, 1.0}) {
        const auto allp = parse_sequence(std::string(11, 'P'));
        const double dg = -T * std::log(1.0 / (n_conf - 1.0));
        CHECK(folding_dG(space, allp, t.state, T) == doctest::Approx(dg).epsilon(1e-12));
        CHECK(oracle_ddG(t, allp, T) ==
              doctest::Approx(dg - folding_dG(space, t.wild_type, t.state, T)).epsilon(1e-12));
    }

    // every symmetry image of the target walk gives the same state and ddG
    const auto y = parse_sequence("HPHPPHHPHPP");
    const double ref = oracle_ddG(t, y);
    for (int s = 0; s < 8; ++s) {
        const auto img = make_target("img", transform(t.conformation.coords(), s), t.wild_type);
        CHECK(img.state == t.state);
        CHECK(oracle_ddG(img, y) == ref);
    }
}

TEST_CASE("canonical forms are idempotent and symmetry invariant")
{
    for (const auto& c : enumerate_conformations(7)) {
        const auto& w = c.coords();
        CHECK(canonical_shape(w) == w);
        for (int s = 0; s < 8; ++s) {
            auto img = transform(w, s);
            CHECK(canonical_shape(img) == w);
            std::reverse(img.begin(), img.end());
            CHECK(canonical_shape(img) == w);
        }
    }
}
