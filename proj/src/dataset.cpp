#include "pzero/dataset.hpp"

#include <set>
#include <sstream>

#include "pzero/error.hpp"
#include "pzero/rng.hpp"

namespace pzero {

const char* to_string(Split s) noexcept
{
    return s == Split::train ? "train" : "test";
}

Split parse_split(const std::string& s)
{
    if (s == "train") {
        return Split::train;
    }
    if (s == "test") {
        return Split::test;
    }
    fail(ErrorKind::io, "unknown split label '" + s + "'");
}

std::vector<const lattice::BackboneTarget*> Dataset::select(Split which) const
{
    std::vector<const lattice::BackboneTarget*> out;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (splits[i] == which) {
            out.push_back(&targets[i]);
        }
    }
    return out;
}

const lattice::BackboneTarget& Dataset::by_id(const std::string& id) const
{
    for (const auto& t : targets) {
        if (t.id == id) {
            return t;
        }
    }
    fail(ErrorKind::input, "no target with id '" + id + "'");
}

Split Dataset::split_of(const std::string& id) const
{
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i].id == id) {
            return splits[i];
        }
    }
    fail(ErrorKind::input, "no target with id '" + id + "'");
}

Dataset build_dataset(const DatasetSpec& spec)
{
    require(spec.length >= 3, ErrorKind::input, "dataset length must be at least 3");
    require(spec.length <= lattice::max_length, ErrorKind::capacity,
            "dataset length " + std::to_string(spec.length) + " exceeds the cap of " +
                std::to_string(lattice::max_length));
    const std::size_t wanted = spec.n_train + spec.n_test;
    require(wanted > 0, ErrorKind::input, "dataset must contain at least one target");

    const auto& space = lattice::FoldSpace::get(spec.length);
    const std::uint32_t full = (1u << spec.length) - 1u;
    const std::size_t budget =
        spec.max_trials > 0 ? spec.max_trials : (std::size_t{32} << spec.length);

    Rng rng(derive_seed(spec.seed, "dataset"));
    Dataset out;
    out.length = spec.length;
    out.seed = spec.seed;
    std::set<std::size_t> seen_shapes;
    std::set<std::uint32_t> designing;
    std::size_t trials = 0;
    while (out.targets.size() < wanted && trials < budget) {
        ++trials;
        const auto mask = static_cast<std::uint32_t>(rng.next()) & full;
        const auto& summary = space.fold(mask);
        if (summary.min_energy >= 0 || summary.ground_states.size() != 1) {
            continue;
        }
        designing.insert(mask);
        const auto state = summary.ground_states.front();
        // a chain-reversed twin folds to the same shape; keep one of them
        if (!seen_shapes.insert(space.shape_of(state)).second) {
            continue;
        }
        const auto index = out.targets.size();
        std::ostringstream id;
        id << "L" << spec.length << "-" << (index < 10 ? "00" : index < 100 ? "0" : "") << index;
        out.targets.push_back(lattice::make_target(id.str(), space.walk(state),
                                                   from_hydrophobic_mask(mask, spec.length)));
        out.splits.push_back(index < spec.n_train ? Split::train : Split::test);
    }
    if (out.targets.size() < wanted) {
        std::ostringstream msg;
        msg << "dataset generation failed at length " << spec.length << ": wanted " << wanted
            << " targets with distinct unique-ground-state shapes, found "
            << out.targets.size() << " after " << trials << " trials (" << designing.size()
            << " distinct designing sequences seen, " << space.state_count()
            << " directed states, " << space.shape_count() << " shapes)";
        fail(ErrorKind::generation, msg.str());
    }
    return out;
}

nlohmann::json to_json(const Dataset& d)
{
    nlohmann::json targets = nlohmann::json::array();
    for (std::size_t i = 0; i < d.targets.size(); ++i) {
        const auto& t = d.targets[i];
        nlohmann::json walk = nlohmann::json::array();
        for (auto p : t.conformation.coords()) {
            walk.push_back({p.x, p.y});
        }
        nlohmann::json contacts = nlohmann::json::array();
        for (auto c : t.contact_map()) {
            contacts.push_back({c.i, c.j});
        }
        targets.push_back({{"id", t.id},
                           {"split", to_string(d.splits[i])},
                           {"walk", walk},
                           {"contacts", contacts},
                           {"wild_type", to_string(t.wild_type)}});
    }
    return {{"format", "pzero-dataset/1"},
            {"alphabet", "HP"},
            {"length", d.length},
            {"seed", d.seed},
            {"targets", targets}};
}

Dataset dataset_from_json(const nlohmann::json& j)
{
    try {
        require(j.at("format") == "pzero-dataset/1", ErrorKind::io, "not a dataset file");
        Dataset d;
        d.length = j.at("length").get<int>();
        d.seed = j.at("seed").get<std::uint64_t>();
        std::set<std::string> ids;
        for (const auto& t : j.at("targets")) {
            lattice::Walk walk;
            for (const auto& p : t.at("walk")) {
                walk.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
            }
            auto target = lattice::make_target(t.at("id").get<std::string>(), walk,
                                               parse_sequence(t.at("wild_type").get<std::string>()));
            std::vector<lattice::Contact> listed;
            for (const auto& c : t.at("contacts")) {
                listed.push_back({c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>()});
            }
            require(listed == target.contact_map(), ErrorKind::io,
                    "contact map of target " + target.id + " does not match its walk");
            require(static_cast<int>(target.length()) == d.length, ErrorKind::io,
                    "target " + target.id + " has the wrong length");
            require(ids.insert(target.id).second, ErrorKind::io, "duplicate target id " + target.id);
            d.splits.push_back(parse_split(t.at("split").get<std::string>()));
            d.targets.push_back(std::move(target));
        }
        return d;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, std::string("malformed dataset file: ") + e.what());
    }
}

std::string serialize(const Dataset& d)
{
    return to_json(d).dump(1) + "\n";
}

}  // namespace pzero
