#pragma once

#include <stdexcept>
#include <string>

namespace epdic {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: malformed data, usage mistakes, invalid arguments.
class InputError : public Error {
public:
    using Error::Error;
};

/// Failure of a numerical procedure on otherwise valid input.
class NumericalError : public Error {
public:
    using Error::Error;
};

class DomainError : public InputError {
public:
    using InputError::InputError;
};

class ShapeMismatch : public InputError {
public:
    using InputError::InputError;
};

class KindMismatch : public InputError {
public:
    using InputError::InputError;
};

class DataError : public InputError {
public:
    using InputError::InputError;
};

class MissingColumn : public DataError {
public:
    using DataError::DataError;
};

/// A cell that is empty or cannot be parsed as the column's type.
class NonNumericCell : public DataError {
public:
    using DataError::DataError;
};

class EmptyFile : public DataError {
public:
    using DataError::DataError;
};

class UsageError : public InputError {
public:
    using InputError::InputError;
};

class SingularityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NonConvergence : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SingularDesign : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NotConverged : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NonPositiveDefinite : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class EmptyActiveSet : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class AllPointsFailed : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A Monte Carlo study lost more replications than it tolerates.
class TooManyFailures : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class CapExceeded : public InputError {
public:
    using InputError::InputError;
};

} // namespace epdic
