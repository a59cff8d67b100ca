#pragma once

#include <stdexcept>
#include <string>

namespace kcforge {

// Exception hierarchy. The CLI maps each family to an exit code:
// InputError -> 2, BackendError -> 3, InvariantError -> 4.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad files, bad configuration, out-of-range arguments.
class InputError : public Error {
public:
    using Error::Error;
};

/// Malformed file content; carries a line or record locator in the message.
class ParseError : public InputError {
public:
    using InputError::InputError;
};

/// Failures of a scoring backend.
class BackendError : public Error {
public:
    using Error::Error;
};

/// Backend could not be reached (or asked us to come back later). Retryable.
class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

/// Backend answered, but not according to the wire protocol. Not retryable.
class ProtocolError : public BackendError {
public:
    using BackendError::BackendError;
};

/// A question whose rendered text scores to zero tokens.
class DegenerateQuestionError : public InputError {
public:
    using InputError::InputError;
};

class InvariantError : public Error {
public:
    using Error::Error;
};

} // namespace kcforge
