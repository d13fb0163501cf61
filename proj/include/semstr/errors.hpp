#pragma once

#include <stdexcept>
#include <string>

namespace semstr {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent user input (files, parameters, arguments).
class InputError : public Error {
 public:
  using Error::Error;
};

class DegenerateQuadError : public InputError {
 public:
  DegenerateQuadError() : InputError("degenerate quad") {}
};

class MalformedCheckpointError : public InputError {
 public:
  using InputError::InputError;
};

class VersionMismatchError : public InputError {
 public:
  using InputError::InputError;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace semstr
