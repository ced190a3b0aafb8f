#pragma once

#include <stdexcept>
#include <string>

namespace rayflow {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter outside its admissible range (schedule bounds, timestep index, counts).
class InvalidRange : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A density was requested from a zero-variance (Dirac) Gaussian.
class DegenerateVariance : public Error {
public:
    using Error::Error;
};

/// A target distribution with no mass, e.g. an all-zero loss profile.
class DegenerateTarget : public Error {
public:
    using Error::Error;
};

class InsufficientSamples : public Error {
public:
    using Error::Error;
};

/// Importance distribution is zero where the integrand is not.
class SupportViolation : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace rayflow
