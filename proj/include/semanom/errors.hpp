#pragma once

#include <stdexcept>
#include <string>

namespace semanom {

// Base for every error raised by the toolkit. Subclasses let callers (the CLI,
// the review service) map failures onto exit codes and HTTP statuses.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input violated a type invariant or a file could not be parsed.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Remote peer answered, but with something we cannot interpret.
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Remote peer could not be reached after the retry budget was spent.
class TransportError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class ConflictError : public Error {
public:
    using Error::Error;
};

} // namespace semanom
