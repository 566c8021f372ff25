#pragma once

#include <stdexcept>
#include <string>

namespace nlsa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid model or run parameter (c < 0, v <= 0, malformed schedule...).
class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// The gauge component of a state is too small to define the overall phase.
class GaugeSingular : public Error {
public:
    using Error::Error;
};

/// Canonical chart evaluated at a population pole where gradients diverge.
class CoordinateSingular : public Error {
public:
    using Error::Error;
};

class NonHermitian : public Error {
public:
    using Error::Error;
};

/// Integrator could not continue; carries the time that was reached.
class StepFailure : public Error {
public:
    StepFailure(const std::string& what, double time_reached)
        : Error(what + " (t = " + std::to_string(time_reached) + ")"), time_(time_reached) {}
    double time_reached() const { return time_; }

private:
    double time_;
};

class NotPeriodic : public Error {
public:
    using Error::Error;
};

class NotClosed : public Error {
public:
    using Error::Error;
};

class NotStationary : public Error {
public:
    using Error::Error;
};

/// Pseudo-arclength step fell below its floor; carries the parameter value.
class StepCollapse : public Error {
public:
    StepCollapse(const std::string& what, double R)
        : Error(what + " (R = " + std::to_string(R) + ")"), R_(R) {}
    double location() const { return R_; }

private:
    double R_;
};

class UnsupportedTopology : public Error {
public:
    using Error::Error;
};

class DegenerateSpectrum : public Error {
public:
    using Error::Error;
};

class EndpointsNotLinear : public Error {
public:
    using Error::Error;
};

class LabelNotFound : public Error {
public:
    using Error::Error;
};

}  // namespace nlsa
