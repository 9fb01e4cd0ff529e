#include <set>

#include "doctest.h"
#include "pzero/dataset.hpp"
#include "pzero/error.hpp"
#include "support.hpp"

using namespace pzero;

TEST_CASE("targets fold back and splits are disjoint")
{
    const auto& d = testing::cached_dataset(12, 9, 5);
    CHECK(d.targets.size() == 14);
    std::set<std::string> train, test;
    std::set<std::size_t> states;
    std::set<std::size_t> shapes;
    const auto& space = lattice::FoldSpace::get(12);
    for (std::size_t i = 0; i < d.targets.size(); ++i) {
        const auto& t = d.targets[i];
        CHECK(lattice::structure_match(t, t.wild_type) == 1.0);
        const auto& fs = space.fold(hydrophobic_mask(t.wild_type));
        CHECK(fs.ground_states.size() == 1);
        CHECK(fs.ground_states[0] == t.state);
        (d.splits[i] == Split::train ? train : test).insert(t.id);
        states.insert(t.state);
        shapes.insert(space.shape_of(t.state));
    }
    CHECK(train.size() == 9);
    CHECK(test.size() == 5);
    for (const auto& id : test) CHECK(train.count(id) == 0);
    CHECK(shapes.size() == d.targets.size());
    CHECK(d.split_of(*test.begin()) == Split::test);
    CHECK_THROWS_AS(d.by_id("nope"), Error);
}

TEST_CASE("same seed, same bytes; serialization round trip")
{
    const auto a = serialize(build_dataset({12, 6, 2, 7, 0}));
    const auto b = serialize(build_dataset({12, 6, 2, 7, 0}));
    CHECK(a == b);
    CHECK(a != serialize(build_dataset({12, 6, 2, 8, 0})));
    const auto back = dataset_from_json(nlohmann::json::parse(a));
    CHECK(serialize(back) == a);
}

TEST_CASE("capacity and generation errors")
{
    try {
        build_dataset({20, 1, 1, 0, 0});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::capacity);
    }
    // ten residues admit only a handful of designable structures
    try {
        build_dataset({10, 30, 10, 0, 0});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::generation);
    }
}
