#pragma once

#include <stdexcept>
#include <string>

namespace mdb {

// Bad argument to an operation (out-of-range id, invalid parameter).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A requested sample count exceeds what a pool can supply.
class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Manifest / image / file ingestion failure.
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid experiment or training configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Memory budget or other resource limit exceeded.
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mdb
