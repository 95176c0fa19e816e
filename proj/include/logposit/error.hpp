#pragma once

#include <stdexcept>
#include <string>

namespace lp {

// Bad parameters, shapes, configs or documents supplied by a caller.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Filesystem or serialization failure.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lp
