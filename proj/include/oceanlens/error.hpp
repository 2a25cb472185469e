#pragma once

#include <stdexcept>
#include <string>

namespace oceanlens {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// File could not be opened, decoded, or written.
class IoError : public Error {
  public:
    using Error::Error;
};

// Two inputs that must be pixel-aligned are not.
class ShapeError : public Error {
  public:
    using Error::Error;
};

// Precondition on a value or configuration violated.
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

// Optimization produced a NaN or infinite loss/gradient.
class NonFiniteError : public Error {
  public:
    NonFiniteError(const std::string& what, int iteration)
        : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

    int iteration() const { return iteration_; }

  private:
    int iteration_;
};

} // namespace oceanlens
