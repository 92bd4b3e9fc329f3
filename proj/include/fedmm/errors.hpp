// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fedmm {

// Base for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor/parameter dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid run configuration (bad rates, counts, scenario names, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed data content (bad labels, empty alignment, ...).
class DataError : public Error {
public:
    using Error::Error;
};

// Container file does not look like the expected format at all.
class FormatError : public Error {
public:
    using Error::Error;
};

// Container file is recognized but its payload is damaged or truncated.
class CorruptionError : public Error {
public:
    using Error::Error;
};

// API misuse (e.g. running backward twice on a consumed tape).
class UsageError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int round, int client)
        : Error(what), round_(round), client_(client) {}

    int round() const { return round_; }
    int client() const { return client_; }

private:
    int round_ = -1;
    int client_ = -1;
};

}  // namespace fedmm
