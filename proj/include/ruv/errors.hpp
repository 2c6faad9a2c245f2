#ifndef RUV_ERRORS_HPP
#define RUV_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ruv {

/// Bad inputs: malformed datasets, out-of-range indices, invalid arguments.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failures: singular systems, non-convergence, non-symmetric input.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// File parsing and filesystem problems.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ruv

#endif
