#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace s4mtl {

// Bad user input: unreadable datasets, malformed configs, contract violations
// at the API boundary.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable or inconsistent files on disk.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure mid-run (non-finite loss, degenerate optimizer state).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

template <typename... Args>
std::string strfmt(const char* fmt, Args... args) {
    int n = std::snprintf(nullptr, 0, fmt, args...);
    std::string s(static_cast<size_t>(n), '\0');
    std::snprintf(s.data(), s.size() + 1, fmt, args...);
    return s;
}

}  // namespace s4mtl
