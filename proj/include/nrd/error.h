#pragma once

#include <stdexcept>
#include <string>

namespace nrd {

// Input-level problems: bad files, bad config values, missing paths.
// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data (bad magic, truncated record, extent overflow).
class FormatError : public ValidationError {
public:
    explicit FormatError(const std::string& msg) : ValidationError(msg) {}
};

// A library precondition was violated (shape mismatch, bad layout).
// The CLI maps these to exit code 2.
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check_contract(bool ok, const std::string& msg) {
    if (!ok) throw ContractError(msg);
}

inline void check_valid(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
}

} // namespace nrd
