#pragma once

#include <stdexcept>
#include <string>

namespace retouch {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class DecodeError : public Error {
public:
    using Error::Error;
};

class ParamOutOfRange : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class TooSmall : public Error {
public:
    using Error::Error;
};

enum class ParseFailure {
    NoCalls,
    UnknownFilter,
    BadParam,
    Placeholder,
    BadDocument,
};

class ParseError : public Error {
public:
    ParseError(ParseFailure reason, const std::string& what) : Error(what), reason_(reason) {}
    ParseFailure reason() const noexcept { return reason_; }

private:
    ParseFailure reason_;
};

class DescriptionParseError : public Error {
public:
    using Error::Error;
};

class InvalidDistribution : public Error {
public:
    using Error::Error;
};

class EmptyReferenceSet : public Error {
public:
    using Error::Error;
};

class InsufficientDataset : public Error {
public:
    using Error::Error;
};

// Transport-level failure talking to an embedding or chat backend.
class BackendError : public Error {
public:
    using Error::Error;
};

// An agent exhausted its retries without producing usable output.
class AgentFailure : public Error {
public:
    AgentFailure(const std::string& what, int attempts) : Error(what), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class WrongState : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace retouch
