#pragma once

#include <stdexcept>
#include <string>

namespace sqrtop {

// Quadrature or eigensolver failed to converge; message carries diagnostics.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

// A result was computed but its estimated error exceeds the requested tolerance.
class accuracy_error : public std::runtime_error {
public:
    accuracy_error(const std::string& what, double estimate)
        : std::runtime_error(what), estimate_(estimate) {}
    double estimate() const { return estimate_; }

private:
    double estimate_;
};

// Matrix square root requested across the branch cut (eigenvalue on the
// closed negative real axis).
class branch_error : public std::runtime_error {
public:
    explicit branch_error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed field file; offset is the byte position of the first bad token.
class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& what, long long byte_offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}
    long long byte_offset() const { return byte_offset_; }

private:
    long long byte_offset_;
};

} // namespace sqrtop
