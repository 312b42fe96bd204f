#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bsdelab {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the operation's domain (bad time, shape mismatch, wrong model kind).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Evaluation of Λ (or λ) at or beyond the terminal time of a singular intensity.
class SingularEvaluation : public DomainError {
public:
    using DomainError::DomainError;
};

class InfeasibleGrid : public Error {
public:
    using Error::Error;
};

class ResourceLimit : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

/// The equation provably has no solution for the supplied data.
class NoSolution : public Error {
public:
    explicit NoSolution(std::string reason)
        : Error("no solution: " + reason), reason_(std::move(reason)) {}
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string reason_;
};

class NoParticularSolution : public Error {
public:
    using Error::Error;
};

/// Regression design matrix is (numerically) rank deficient at a time node.
class BasisDegenerate : public NumericError {
public:
    BasisDegenerate(std::size_t node, double condition)
        : NumericError("regression basis degenerate at node " + std::to_string(node) +
                       " (condition number " + std::to_string(condition) + ")"),
          node_(node) {}
    std::size_t node() const noexcept { return node_; }

private:
    std::size_t node_;
};

class CertificateFailed : public Error {
public:
    CertificateFailed(std::size_t member, const std::string& what)
        : Error("certificate failed at member " + std::to_string(member) + ": " + what),
          member_(member) {}
    std::size_t member() const noexcept { return member_; }

private:
    std::size_t member_;
};

/// Malformed scenario configuration; carries the offending source line (0 if none) and field.
class ConfigError : public Error {
public:
    ConfigError(std::string source, std::size_t line, std::string field, const std::string& what)
        : Error(format(source, line, field, what)),
          source_(std::move(source)),
          line_(line),
          field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }
    std::size_t line() const noexcept { return line_; }

private:
    static std::string format(const std::string& source, std::size_t line, const std::string& field,
                              const std::string& what) {
        std::string out = source;
        if (line > 0) out += ":" + std::to_string(line);
        if (!field.empty()) out += ": field '" + field + "'";
        return out + ": " + what;
    }
    std::string source_;
    std::size_t line_;
    std::string field_;
};

}  // namespace bsdelab
