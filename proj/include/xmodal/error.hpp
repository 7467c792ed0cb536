#pragma once

#include <stdexcept>
#include <string>

namespace xmodal {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or extents.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Out-of-range hyperparameter or violated argument contract.
class ValueError : public Error {
public:
    using Error::Error;
};

// A vector with zero norm reached an operation that needs a direction.
class DegenerateVectorError : public ValueError {
public:
    using ValueError::ValueError;
};

// NaN or Inf produced by a forward op, or a non-finite loss.
class NumericError : public Error {
public:
    using Error::Error;
};

// Misuse of the autodiff tape (re-entrant backward, non-scalar loss).
class TapeError : public Error {
public:
    using Error::Error;
};

// File I/O and on-disk format violations.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace xmodal
