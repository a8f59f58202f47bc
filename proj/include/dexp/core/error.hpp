#pragma once

#include <stdexcept>
#include <string>

namespace dexp {

/**
 * Base class of all errors raised by the library.
 *
 * Every error carries a short machine-readable code (e.g. "shape", "pose")
 * next to the human-readable message. The CLI prints both on one line.
 */
class Error : public std::runtime_error
{
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code))
    {
    }

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// A precondition on an argument does not hold.
class ValidationError : public Error
{
public:
    explicit ValidationError(const std::string& message) : Error("validation", message) {}
    ValidationError(std::string code, const std::string& message) : Error(std::move(code), message) {}
};

/// Tensor extents disagree with what an operation expects.
class ShapeError : public ValidationError
{
public:
    explicit ShapeError(const std::string& message) : ValidationError("shape", message) {}
};

/// Reading or writing a file failed, or a file is malformed.
class IoError : public Error
{
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

} // namespace dexp
