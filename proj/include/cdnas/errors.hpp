#pragma once

#include <stdexcept>
#include <string>

namespace cdnas {

// A forward value left the guarded range (|v| <= kValueGuard) or went
// NaN/Inf. The trainer treats this as an early-stop signal.
struct NumericOverflow : std::runtime_error {
    explicit NumericOverflow(const std::string& what) : std::runtime_error(what) {}
};

// Operator applied to an input shape it cannot accept.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed tree (bad arity, dangling child ids, leaf root, ...).
struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& what) : std::runtime_error(what) {}
};

// Violated domain constraint (e.g. tree depth over the cap).
struct ConstraintError : std::runtime_error {
    explicit ConstraintError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct RunStateError : std::runtime_error {
    explicit RunStateError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr double kValueGuard = 1e12;

}  // namespace cdnas
