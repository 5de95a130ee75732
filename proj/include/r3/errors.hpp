#pragma once

#include <stdexcept>
#include <string>

namespace r3 {

// Caller violated a documented precondition (bad shapes, empty inputs, ...).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A forward pass produced inf/nan. `layer` is the index of the dense layer
// whose output went non-finite (-1 when raised outside the network).
class NumericOverflow : public std::runtime_error {
public:
    NumericOverflow(const std::string& what, int layer)
        : std::runtime_error(what), layer_(layer) {}
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace r3
