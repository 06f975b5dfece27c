#pragma once

#include <stdexcept>
#include <string>

namespace hdrfuse {

// Error taxonomy mirrors the process exit codes: 2 usage, 3 data, 4 numeric.
enum class ErrorKind { usage = 2, data = 3, numeric = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

// Contract violations: bad shapes, invalid flags, malformed configs.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(ErrorKind::usage, msg) {}
};

// Unreadable or malformed input files, missing samples.
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

// Non-finite values, failed verification.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(ErrorKind::numeric, msg) {}
};

}  // namespace hdrfuse
