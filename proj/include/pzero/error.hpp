#pragma once

#include <stdexcept>
#include <string>

namespace pzero {

enum class ErrorKind {
    config,
    input,
    usage,
    capacity,
    generation,
    domain,
    convergence,
    leakage,
    io,
};

/// Process exit code for a failure of the given kind. 0 is success and 1 is
/// reserved for failed checks (theory suite, acceptance).
int exit_code(ErrorKind kind) noexcept;

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind)
    {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what)
{
    throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what)
{
    if (!cond) {
        throw Error(kind, what);
    }
}

}  // namespace pzero
