#include "pzero/sequence.hpp"

#include <algorithm>

#include "pzero/error.hpp"

namespace pzero {

Alphabet::Alphabet(std::string symbols) : symbols_(std::move(symbols))
{
    require(symbols_.size() >= 2, ErrorKind::config, "alphabet needs at least two symbols");
    auto sorted = symbols_;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::config,
            "alphabet has duplicate symbols: " + symbols_);
}

Token Alphabet::index(char c) const
{
    const auto pos = symbols_.find(c);
    require(pos != std::string::npos, ErrorKind::input,
            std::string("token '") + c + "' not in alphabet " + symbols_);
    return static_cast<Token>(pos);
}

Sequence parse_sequence(std::string_view text, const Alphabet& alphabet)
{
    Sequence y;
    y.tokens.reserve(text.size());
    for (char c : text) {
        y.tokens.push_back(alphabet.index(c));
    }
    return y;
}

std::string to_string(const Sequence& y, const Alphabet& alphabet)
{
    std::string out;
    out.reserve(y.size());
    for (auto t : y.tokens) {
        out.push_back(alphabet.symbol(t));
    }
    return out;
}

void validate(const Sequence& y, const Alphabet& alphabet)
{
    for (auto t : y.tokens) {
        require(t < alphabet.size(), ErrorKind::input,
                "token index " + std::to_string(t) + " outside alphabet " + alphabet.symbols());
    }
}

std::uint32_t hydrophobic_mask(const Sequence& y)
{
    require(y.size() <= 32, ErrorKind::capacity, "sequence too long for a bitmask");
    std::uint32_t m = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        require(y[i] < 2, ErrorKind::input, "HP model needs a two-letter alphabet");
        if (y[i] == 0) {
            m |= 1u << i;
        }
    }
    return m;
}

Sequence from_hydrophobic_mask(std::uint32_t mask, std::size_t length)
{
    Sequence y;
    y.tokens.resize(length);
    for (std::size_t i = 0; i < length; ++i) {
        y.tokens[i] = ((mask >> i) & 1u) ? 0 : 1;
    }
    return y;
}

}  // namespace pzero
