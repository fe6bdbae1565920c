#pragma once

#include <stdexcept>
#include <string>

namespace fairpost {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or invariant-violating input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A group/label cell needed by a rate or mean is empty.
class DegenerateGroupError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairpost
