#pragma once

#include <stdexcept>
#include <string>

namespace lmcal {

/// Invalid configuration, hyperparameter or argument combination.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Inputs whose shape or contents violate an operation's contract.
class DataError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// File system or format failure while reading or writing artifacts.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised as `require(cond, "...")` for precondition checks.
template <class E = ConfigError>
inline void require(bool condition, const std::string& message) {
    if (!condition) throw E(message);
}

} // namespace lmcal
