#pragma once

#include <stdexcept>
#include <string>

namespace medcollab {

// Base for every typed error the library raises.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// -- gateway --
struct BackendUnreachable : Error {
    using Error::Error;
};
struct AuthMissing : Error {
    using Error::Error;
};
struct ResponseTruncated : Error {
    using Error::Error;
};
// Non-retryable 4xx from the server: surfaces immediately as a caller bug.
struct RequestRejected : Error {
    using Error::Error;
};

// -- prompt rendering --
struct MissingContextField : Error {
    using Error::Error;
};
struct UnresolvedPlaceholder : Error {
    using Error::Error;
};

// -- structured parsing --
struct ParseError : Error {
    using Error::Error;
};
struct FormatNotFound : ParseError {
    using ParseError::ParseError;
};
struct AnswerNotFound : ParseError {
    using ParseError::ParseError;
};
struct LabelOutOfRange : ParseError {
    using ParseError::ParseError;
};

// -- datasets --
struct UnknownFormat : Error {
    using Error::Error;
};
struct SchemaViolation : Error {
    using Error::Error;
};
struct CountExceedsPopulation : Error {
    using Error::Error;
};

// -- transcripts --
struct SchemaVersionUnsupported : Error {
    using Error::Error;
};

}  // namespace medcollab
