#pragma once

#include <stdexcept>
#include <string>

namespace tsint {

// Error taxonomy shared by all modules. The CLI maps kinds onto exit codes.
enum class ErrKind {
    PointNotInScale,
    EndpointNotInScale,
    EmptyRestriction,
    MismatchedEndpoints,
    InvalidScale,
    SyntaxError,
    ArityError,
    DomainError,
    UnknownConvexFn,
    NonMonotoneIntegrator,
    NoConvergence,
    NonConvergent,
    SelectionOutOfCell,
    PreconditionViolated,
    OrderingViolated,
    GeneratorExhausted,
    InvalidArgument,
};

const char* to_string(ErrKind k);

class Error : public std::runtime_error {
public:
    Error(ErrKind kind, const std::string& msg)
        : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}

    ErrKind kind() const { return kind_; }

private:
    ErrKind kind_;
};

// Parse errors additionally carry a 1-based column.
class ParseError : public Error {
public:
    ParseError(ErrKind kind, const std::string& msg, std::size_t column)
        : Error(kind, msg + " (column " + std::to_string(column) + ")"), column_(column) {}

    std::size_t column() const { return column_; }

private:
    std::size_t column_;
};

[[noreturn]] inline void fail(ErrKind k, const std::string& msg) { throw Error(k, msg); }

} // namespace tsint
