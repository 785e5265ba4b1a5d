#pragma once

#include <stdexcept>
#include <string>

namespace v2x {

/// Base class for all errors raised by the simulator and learners.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A pose, queue or other state violates its invariants.
class InvalidStateError : public Error {
public:
    using Error::Error;
};

/// NLOS path loss requested for a pair aligned with an axis.
class DegenerateGeometryError : public Error {
public:
    using Error::Error;
};

class InvalidGainError : public Error {
public:
    using Error::Error;
};

/// A joint action breaks one of the channel-allocation constraints.
class RejectedActionError : public Error {
public:
    using Error::Error;
};

class InvalidScoreError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class InvalidTargetError : public Error {
public:
    using Error::Error;
};

/// Training loss blew past the divergence guard.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Config validation failure; the message lists every violation, one per line.
class ValidationError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace v2x
