#pragma once

#include <stdexcept>
#include <string>

namespace msgp {

/// Bad user-facing configuration: sizes, ranges, file schemas. CLI exit code 1.
class config_error : public std::runtime_error {
public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid arguments to an in-process operation (wrong domain, non-SPD input, ...).
class domain_error : public std::domain_error {
public:
  explicit domain_error(const std::string& what) : std::domain_error(what) {}
};

/// Numerical breakdown after all safeguards (factorization, solver). CLI exit code 2.
class numerical_error : public std::runtime_error {
public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace msgp
