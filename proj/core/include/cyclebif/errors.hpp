#pragma once

#include <stdexcept>
#include <string>

namespace cyclebif {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Expression syntax error; offset is the byte position in the source text.
struct ParseError : Error {
    ParseError(const std::string& what, std::size_t offset_)
        : Error(what), offset(offset_) {}
    std::size_t offset;
};

/// Evaluation outside a function's domain (log/sqrt of a negative argument).
/// subexpression holds the offending piece, pretty-printed.
struct DomainError : Error {
    DomainError(const std::string& what, std::string subexpression_)
        : Error(what), subexpression(std::move(subexpression_)) {}
    std::string subexpression;
};

/// Ill-formed system or configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Integration failure (blow-up, step-count exhaustion). t_fail is the time
/// at which the failure was detected.
struct IntegrationError : Error {
    IntegrationError(const std::string& what, double t_fail_)
        : Error(what), t_fail(t_fail_) {}
    double t_fail;
};

/// Newton or root-solve non-convergence.
struct ConvergenceError : Error {
    using Error::Error;
};

}  // namespace cyclebif
