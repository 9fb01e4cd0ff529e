#include "pzero/lattice.hpp"

#include <algorithm>
#include <bitset>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>

#include "pzero/error.hpp"
#include "pzero/fold_kernels.hpp"

namespace pzero::lattice {

namespace {

constexpr std::array<Point, 4> steps{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};

Point apply(Point p, int symmetry)
{
    switch (symmetry) {
    case 0: return {p.x, p.y};
    case 1: return {-p.y, p.x};
    case 2: return {-p.x, -p.y};
    case 3: return {p.y, -p.x};
    case 4: return {p.x, -p.y};
    case 5: return {-p.x, p.y};
    case 6: return {p.y, p.x};
    default: return {-p.y, -p.x};
    }
}

int step_index(Point from, Point to)
{
    const Point d{to.x - from.x, to.y - from.y};
    for (int k = 0; k < 4; ++k) {
        if (steps[static_cast<std::size_t>(k)] == d) {
            return k;
        }
    }
    return -1;
}

std::uint32_t encode(std::span<const Point> walk)
{
    std::uint32_t code = 0;
    for (std::size_t k = 1; k < walk.size(); ++k) {
        code |= static_cast<std::uint32_t>(step_index(walk[k - 1], walk[k])) << (2 * (k - 1));
    }
    return code;
}

Walk decode(std::uint32_t code, int length)
{
    Walk w(static_cast<std::size_t>(length));
    for (int k = 1; k < length; ++k) {
        const auto s = steps[(code >> (2 * (k - 1))) & 3u];
        w[static_cast<std::size_t>(k)] = {w[static_cast<std::size_t>(k) - 1].x + s.x,
                                          w[static_cast<std::size_t>(k) - 1].y + s.y};
    }
    return w;
}

void check_length(int length)
{
    require(length >= 2, ErrorKind::input, "chain length must be at least 2");
    require(length <= max_length, ErrorKind::capacity,
            "chain length " + std::to_string(length) + " exceeds the enumeration cap of " +
                std::to_string(max_length));
}

// One walk per orbit of the lattice symmetry group: first step +x and first
// turn towards +y.
void grow(Walk& walk, std::vector<Point>& occupied, bool turned, int length,
          std::vector<std::uint32_t>& codes)
{
    if (static_cast<int>(walk.size()) == length) {
        codes.push_back(encode(canonical_directed(walk)));
        return;
    }
    const Point last = walk.back();
    for (int k = 0; k < 4; ++k) {
        if (!turned && k != 0 && k != 1) {
            continue;
        }
        const Point next{last.x + steps[static_cast<std::size_t>(k)].x,
                         last.y + steps[static_cast<std::size_t>(k)].y};
        if (std::find(occupied.begin(), occupied.end(), next) != occupied.end()) {
            continue;
        }
        walk.push_back(next);
        occupied.push_back(next);
        grow(walk, occupied, turned || k == 1, length, codes);
        walk.pop_back();
        occupied.pop_back();
    }
}

std::vector<std::uint32_t> directed_codes(int length)
{
    std::vector<std::uint32_t> codes;
    Walk walk{{0, 0}};
    std::vector<Point> occupied{{0, 0}};
    if (length >= 2) {
        walk.push_back({1, 0});
        occupied.push_back({1, 0});
        grow(walk, occupied, false, length, codes);
    }
    std::sort(codes.begin(), codes.end());
    return codes;
}

double log_sum_exp_histogram(const std::vector<std::uint64_t>& histogram, double temperature)
{
    // sum_k n_k exp(k / T); energies are -k
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < histogram.size(); ++k) {
        if (histogram[k] > 0) {
            top = std::max(top, static_cast<double>(k) / temperature);
        }
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < histogram.size(); ++k) {
        if (histogram[k] > 0) {
            acc += static_cast<double>(histogram[k]) * std::exp(static_cast<double>(k) / temperature - top);
        }
    }
    return top + std::log(acc);
}

}  // namespace

bool is_self_avoiding_walk(std::span<const Point> walk)
{
    for (std::size_t k = 1; k < walk.size(); ++k) {
        if (step_index(walk[k - 1], walk[k]) < 0) {
            return false;
        }
    }
    for (std::size_t a = 0; a < walk.size(); ++a) {
        for (std::size_t b = a + 1; b < walk.size(); ++b) {
            if (walk[a] == walk[b]) {
                return false;
            }
        }
    }
    return true;
}

Walk transform(std::span<const Point> walk, int symmetry)
{
    Walk out;
    out.reserve(walk.size());
    if (walk.empty()) {
        return out;
    }
    const Point origin = apply(walk.front(), symmetry);
    for (auto p : walk) {
        const Point q = apply(p, symmetry);
        out.push_back({q.x - origin.x, q.y - origin.y});
    }
    return out;
}

Walk canonical_directed(std::span<const Point> walk)
{
    Walk best = transform(walk, 0);
    for (int s = 1; s < 8; ++s) {
        auto candidate = transform(walk, s);
        if (candidate < best) {
            best = std::move(candidate);
        }
    }
    return best;
}

Walk canonical_shape(std::span<const Point> walk)
{
    Walk reversed(walk.rbegin(), walk.rend());
    return std::min(canonical_directed(walk), canonical_directed(reversed));
}

std::vector<Contact> contacts_of(std::span<const Point> walk)
{
    std::vector<Contact> out;
    for (std::size_t i = 0; i < walk.size(); ++i) {
        for (std::size_t j = i + 2; j < walk.size(); ++j) {
            if (std::abs(walk[i].x - walk[j].x) + std::abs(walk[i].y - walk[j].y) == 1) {
                out.push_back({static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(j)});
            }
        }
    }
    return out;
}

Conformation::Conformation(Walk coords) : coords_(std::move(coords))
{
    require(!coords_.empty(), ErrorKind::input, "empty conformation");
    require(is_self_avoiding_walk(coords_), ErrorKind::input, "coordinates are not a self-avoiding walk");
    contacts_ = contacts_of(coords_);
    canonical_ = coords_ == canonical_shape(coords_);
}

std::vector<Conformation> enumerate_conformations(int length)
{
    check_length(length);
    const auto& space = FoldSpace::get(length);
    std::vector<std::uint32_t> shape_codes;
    for (std::size_t s = 0; s < space.state_count(); ++s) {
        shape_codes.push_back(encode(canonical_shape(space.walk(s))));
    }
    std::sort(shape_codes.begin(), shape_codes.end());
    shape_codes.erase(std::unique(shape_codes.begin(), shape_codes.end()), shape_codes.end());
    std::vector<Conformation> out;
    out.reserve(shape_codes.size());
    for (auto code : shape_codes) {
        out.emplace_back(decode(code, length));
    }
    return out;
}

int energy(const Sequence& y, const Conformation& c)
{
    require(y.size() == c.size(), ErrorKind::input,
            "sequence length " + std::to_string(y.size()) + " does not match conformation length " +
                std::to_string(c.size()));
    int e = 0;
    for (auto [i, j] : c.contacts()) {
        require(y[i] < 2 && y[j] < 2, ErrorKind::input, "HP energy needs a two-letter alphabet");
        if (y[i] == 0 && y[j] == 0) {
            --e;
        }
    }
    return e;
}

const FoldSpace& FoldSpace::get(int length)
{
    check_length(length);
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<FoldSpace>> spaces;
    std::lock_guard lock(mutex);
    auto& slot = spaces[length];
    if (!slot) {
        slot = std::make_unique<FoldSpace>(length);
    }
    return *slot;
}

FoldSpace::FoldSpace(int length) : length_(length)
{
    check_length(length);
    codes_ = directed_codes(length);

    offsets_.reserve(codes_.size() + 1);
    offsets_.push_back(0);
    std::vector<std::uint32_t> shape_codes(codes_.size());
    for (std::size_t s = 0; s < codes_.size(); ++s) {
        const auto w = decode(codes_[s], length);
        for (auto c : contacts_of(w)) {
            contacts_.push_back(c);
        }
        offsets_.push_back(static_cast<std::uint32_t>(contacts_.size()));
        shape_codes[s] = encode(canonical_shape(w));
    }
    auto unique_shapes = shape_codes;
    std::sort(unique_shapes.begin(), unique_shapes.end());
    unique_shapes.erase(std::unique(unique_shapes.begin(), unique_shapes.end()), unique_shapes.end());
    shape_count_ = unique_shapes.size();
    shape_of_.resize(codes_.size());
    for (std::size_t s = 0; s < codes_.size(); ++s) {
        shape_of_[s] = static_cast<std::uint32_t>(
            std::lower_bound(unique_shapes.begin(), unique_shapes.end(), shape_codes[s]) -
            unique_shapes.begin());
    }
    Walk line(static_cast<std::size_t>(length));
    for (int k = 0; k < length; ++k) {
        line[static_cast<std::size_t>(k)] = {k, 0};
    }
    straight_ = find(line);
}

Walk FoldSpace::walk(std::size_t state) const
{
    return decode(codes_.at(state), length_);
}

std::optional<std::size_t> FoldSpace::find(std::span<const Point> walk) const
{
    if (static_cast<int>(walk.size()) != length_ || !is_self_avoiding_walk(walk)) {
        return std::nullopt;
    }
    const auto code = encode(canonical_directed(walk));
    const auto it = std::lower_bound(codes_.begin(), codes_.end(), code);
    if (it == codes_.end() || *it != code) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - codes_.begin());
}

const FoldSummary& FoldSpace::fold(std::uint32_t hmask) const
{
    {
        std::shared_lock lock(cache_mutex_);
        if (auto it = cache_.find(hmask); it != cache_.end()) {
            return *it->second;
        }
    }
    auto summary = std::make_unique<FoldSummary>(kernels::fold_summary_serial(*this, hmask));
    std::unique_lock lock(cache_mutex_);
    auto [it, inserted] = cache_.try_emplace(hmask, std::move(summary));
    return *it->second;
}

BackboneTarget make_target(std::string id, const Walk& walk, Sequence wild_type)
{
    const int length = static_cast<int>(walk.size());
    check_length(length);
    require(wild_type.size() == walk.size(), ErrorKind::input,
            "wild type length does not match the target conformation");
    hydrophobic_mask(wild_type);  // validates tokens
    const auto& space = FoldSpace::get(length);
    const auto state = space.find(walk);
    require(state.has_value(), ErrorKind::input, "target walk is not self-avoiding");
    BackboneTarget t;
    t.id = std::move(id);
    t.conformation = Conformation(space.walk(*state));
    t.wild_type = std::move(wild_type);
    t.state = *state;
    return t;
}

double structure_match(const BackboneTarget& target, const Sequence& y)
{
    require(y.size() == target.length(), ErrorKind::input,
            "sequence length " + std::to_string(y.size()) + " does not match target length " +
                std::to_string(target.length()));
    const auto& space = FoldSpace::get(static_cast<int>(target.length()));
    const auto& summary = space.fold(hydrophobic_mask(y));
    const auto& native = target.contact_map();
    if (native.empty()) {
        const auto straight = space.straight_state();
        return std::binary_search(summary.ground_states.begin(), summary.ground_states.end(),
                                  static_cast<std::uint32_t>(*straight))
                   ? 1.0
                   : 0.0;
    }
    std::bitset<max_length * max_length> native_bits;
    for (auto [i, j] : native) {
        native_bits.set(static_cast<std::size_t>(i) * max_length + j);
    }
    std::size_t best = 0;
    for (auto s : summary.ground_states) {
        std::size_t shared = 0;
        for (auto [i, j] : space.contacts(s)) {
            shared += native_bits.test(static_cast<std::size_t>(i) * max_length + j) ? 1 : 0;
        }
        best = std::max(best, shared);
        if (best == native.size()) {
            break;
        }
    }
    return static_cast<double>(best) / static_cast<double>(native.size());
}

bool is_degenerate(const Sequence& y)
{
    const auto& space = FoldSpace::get(static_cast<int>(y.size()));
    return space.fold(hydrophobic_mask(y)).ground_states.size() == space.state_count();
}

std::vector<Sequence> designing_sequences(const BackboneTarget& target)
{
    const int length = static_cast<int>(target.length());
    const auto& space = FoldSpace::get(length);
    std::vector<Sequence> out;
    for (std::uint32_t mask = 0; mask < (1u << length); ++mask) {
        const auto& fs = space.fold(mask);
        if (fs.ground_states.size() == 1 && fs.ground_states[0] == target.state) {
            out.push_back(from_hydrophobic_mask(mask, target.length()));
        }
    }
    return out;
}

double folding_dG(const FoldSpace& space, const Sequence& y, std::size_t state, double temperature)
{
    require(temperature > 0.0, ErrorKind::domain, "temperature must be positive");
    require(static_cast<int>(y.size()) == space.length(), ErrorKind::input,
            "sequence length does not match the fold space");
    require(space.state_count() >= 2, ErrorKind::capacity,
            "folding free energy needs at least two conformations (length >= 3)");
    const auto mask = hydrophobic_mask(y);
    int e_native = 0;
    for (auto [i, j] : space.contacts(state)) {
        e_native -= static_cast<int>((mask >> i) & (mask >> j) & 1u);
    }
    auto histogram = space.fold(mask).histogram;
    --histogram[static_cast<std::size_t>(-e_native)];
    const double log_w = -static_cast<double>(e_native) / temperature;
    const double log_rest = log_sum_exp_histogram(histogram, temperature);
    return -temperature * (log_w - log_rest);
}

double oracle_ddG(const BackboneTarget& target, const Sequence& y, double temperature)
{
    require(y.size() == target.length(), ErrorKind::input, "sequence length does not match target");
    const auto& space = FoldSpace::get(static_cast<int>(target.length()));
    return folding_dG(space, y, target.state, temperature) -
           folding_dG(space, target.wild_type, target.state, temperature);
}

}  // namespace pzero::lattice
