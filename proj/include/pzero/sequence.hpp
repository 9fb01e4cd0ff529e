#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pzero {

using Token = std::uint8_t;

/// Ordered token alphabet. Index 0 is the hydrophobic symbol for the HP model.
class Alphabet {
public:
    Alphabet() : symbols_("HP") {}
    explicit Alphabet(std::string symbols);

    std::size_t size() const noexcept { return symbols_.size(); }
    const std::string& symbols() const noexcept { return symbols_; }
    char symbol(Token t) const { return symbols_.at(t); }
    Token index(char c) const;  // throws input error for unknown symbols
    bool is_hp() const noexcept { return symbols_ == "HP"; }

    bool operator==(const Alphabet&) const = default;

private:
    std::string symbols_;
};

struct Sequence {
    std::vector<Token> tokens;

    std::size_t size() const noexcept { return tokens.size(); }
    Token operator[](std::size_t i) const { return tokens[i]; }

    bool operator==(const Sequence&) const = default;
    auto operator<=>(const Sequence&) const = default;
};

Sequence parse_sequence(std::string_view text, const Alphabet& alphabet = {});
std::string to_string(const Sequence& y, const Alphabet& alphabet = {});

/// Throws an input error if any token is outside the alphabet.
void validate(const Sequence& y, const Alphabet& alphabet);

/// Bitmask of positions holding token 0 (H). Requires size() <= 32.
std::uint32_t hydrophobic_mask(const Sequence& y);
Sequence from_hydrophobic_mask(std::uint32_t mask, std::size_t length);

}  // namespace pzero
