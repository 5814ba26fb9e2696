#pragma once

#include <stdexcept>
#include <string>

namespace eccsnn {

/// Failure category; the CLI maps these onto exit codes.
enum class ErrorKind {
    Usage,      // bad flags or flag combinations
    Data,       // malformed model/dataset/container, shape mismatch
    Invariant,  // internal invariant violated
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class InvariantError : public Error {
public:
    explicit InvariantError(const std::string& what) : Error(ErrorKind::Invariant, what) {}
};

}  // namespace eccsnn
