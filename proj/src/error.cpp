#include "pzero/error.hpp"

namespace pzero {

int exit_code(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::capacity: return 3;
    case ErrorKind::convergence: return 4;
    case ErrorKind::leakage: return 5;
    case ErrorKind::generation: return 6;
    case ErrorKind::io: return 7;
    case ErrorKind::input: return 8;
    case ErrorKind::usage: return 9;
    case ErrorKind::domain: return 10;
    }
    return 1;
}

const char* to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::input: return "input";
    case ErrorKind::usage: return "usage";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::generation: return "generation";
    case ErrorKind::domain: return "domain";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::leakage: return "leakage";
    case ErrorKind::io: return "io";
    }
    return "unknown";
}

}  // namespace pzero
