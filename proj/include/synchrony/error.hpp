#pragma once

#include <stdexcept>
#include <string>

namespace synchrony {

/// Error categories. The numeric values double as CLI exit codes and as the
/// status codes of the C API.
enum class ErrorKind : int {
    Input = 2,       // malformed file, parse failure, invalid parameters
    Numerical = 3,   // blow-up, equilibrium not found, NaN activations
    Contract = 4,    // shape/dimension mismatch, fingerprint mismatch
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

class TopologyError : public Error {
public:
    explicit TopologyError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(ErrorKind::Contract, what) {}
};

class FingerprintError : public Error {
public:
    explicit FingerprintError(const std::string& what) : Error(ErrorKind::Contract, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// Integration produced a non-finite state.
class BlowUpError : public NumericalError {
public:
    BlowUpError(double time, const std::string& what) : NumericalError(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

class EquilibriumNotFound : public NumericalError {
public:
    explicit EquilibriumNotFound(const std::string& what) : NumericalError(what) {}
};

}  // namespace synchrony
