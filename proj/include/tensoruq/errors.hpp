#pragma once

#include <stdexcept>
#include <string>

namespace tensoruq {

// Argument outside the mathematical domain of an operation (degree range,
// non-finite input, q outside (0,1], ...).
struct domain_error : std::domain_error {
    using std::domain_error::domain_error;
};

// Mismatched dimensions between tensors, vectors or datasets.
struct shape_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Linear solve or eigen-decomposition failure.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Refusal to materialize an object that would be too large.
struct capacity_error : std::length_error {
    using std::length_error::length_error;
};

struct config_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Simulator subprocess misbehaved (spawn failure, timeout, malformed output).
struct protocol_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct load_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace tensoruq
