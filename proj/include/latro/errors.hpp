#pragma once

#include <stdexcept>
#include <string>

namespace latro {

/// Base class of all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DegenerateGeometry : public Error {
public:
    using Error::Error;
};

/// Stiffness factorisation failed; the structure contains a mechanism.
class SingularStructure : public Error {
public:
    SingularStructure(const std::string& what, int pivot)
        : Error(what), pivot_(pivot) {}
    /// Index of the failing pivot in the reduced (free-DOF) system, -1 if unknown.
    int pivot() const { return pivot_; }

private:
    int pivot_ = -1;
};

/// A matrix that must be symmetric positive definite is not.
class NotSpd : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class OptimizationAbort : public Error {
public:
    using Error::Error;
};

} // namespace latro
