#pragma once

#include <stdexcept>
#include <string>

namespace fairpart {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Total mixture density is zero at the queried location.
class ZeroDensity : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Some group has zero total count in a site table.
class EmptyGroup : public Error {
 public:
  using Error::Error;
};

class UnknownSite : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Iterates left the finite range (usually a mis-scaled step size).
class NonFinite : public Error {
 public:
  using Error::Error;
};

class Infeasible : public Error {
 public:
  using Error::Error;
};

}  // namespace fairpart
