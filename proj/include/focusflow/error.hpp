#pragma once

#include <stdexcept>
#include <string>

namespace focusflow {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Raised when a forward pass or loss produces a non-finite value.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace focusflow
