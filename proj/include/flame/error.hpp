#pragma once

#include <stdexcept>
#include <string>

namespace flame {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Two parameter or gradient vectors with incompatible layouts were combined.
class LayoutMismatch : public Error {
public:
    using Error::Error;
};

// Model input does not have the shape the model spec expects.
class ShapeMismatch : public Error {
public:
    using Error::Error;
};

// Dataset file errors, one type per failure mode.
class DatasetFormatError : public Error {
public:
    using Error::Error;
};

class BadMagic : public DatasetFormatError {
public:
    BadMagic() : DatasetFormatError("bad magic") {}
};

class VersionMismatch : public DatasetFormatError {
public:
    explicit VersionMismatch(unsigned found)
        : DatasetFormatError("version mismatch: found " + std::to_string(found)) {}
};

class Truncated : public DatasetFormatError {
public:
    explicit Truncated(const std::string& where) : DatasetFormatError("truncated " + where) {}
};

// Raised when eta*J*mu/M >= 1 and the convergence recursion no longer contracts.
class BoundInapplicable : public Error {
public:
    explicit BoundInapplicable(double factor)
        : Error("bound inapplicable: eta*J*mu/M = " + std::to_string(factor) + " >= 1") {}
    explicit BoundInapplicable(const std::string& why) : Error("bound inapplicable: " + why) {}
};

// Configuration problems; `key` is the dotted path of the offending entry.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& message)
        : Error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace flame
