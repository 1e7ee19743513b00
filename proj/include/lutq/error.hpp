#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lutq {

// Every failure raised by the library derives from Error. The CLI maps the
// concrete type onto its exit code (see exit_code()).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file header, payload size mismatch, bad magic.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Non-finite values in an otherwise well-formed payload.
class DataError : public Error {
public:
    using Error::Error;
};

/// Shape mismatch or out-of-range parameter.
class ArgumentError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration (CLI level).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Cholesky met a non-positive pivot.
class DefinitenessError : public Error {
public:
    DefinitenessError(std::size_t index, double pivot)
        : Error("matrix is not positive definite: pivot " + std::to_string(pivot) +
                " at index " + std::to_string(index)),
          index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

namespace exit_codes {
inline constexpr int ok = 0;
inline constexpr int config = 2;
inline constexpr int format = 3;
inline constexpr int numeric = 4;
}  // namespace exit_codes

inline int exit_code(const Error& e) noexcept {
    if (dynamic_cast<const DefinitenessError*>(&e) || dynamic_cast<const DataError*>(&e)) {
        return exit_codes::numeric;
    }
    if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const IoError*>(&e)) {
        return exit_codes::format;
    }
    return exit_codes::config;
}

}  // namespace lutq
