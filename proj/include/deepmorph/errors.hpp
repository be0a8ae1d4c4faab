#ifndef DEEPMORPH_ERRORS_HPP_
#define DEEPMORPH_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace deepmorph {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Header missing, wrong magic or unsupported version.
class MalformedHeaderError : public Error {
 public:
  using Error::Error;
};

/// Header is fine but the payload holds fewer values than it declares.
class TruncatedPayloadError : public Error {
 public:
  using Error::Error;
};

/// A call made outside its documented lifecycle (e.g. backward without forward).
class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class AnnotationError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace deepmorph

#endif  // DEEPMORPH_ERRORS_HPP_
