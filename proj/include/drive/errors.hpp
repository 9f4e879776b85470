#pragma once

#include <stdexcept>
#include <string>

namespace drive {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DRIVE_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

DRIVE_DEFINE_ERROR(IoError);
DRIVE_DEFINE_ERROR(FormatError);
DRIVE_DEFINE_ERROR(ValidationError);
DRIVE_DEFINE_ERROR(ShapeError);
DRIVE_DEFINE_ERROR(StateError);
DRIVE_DEFINE_ERROR(NumericError);
DRIVE_DEFINE_ERROR(ConfigError);
DRIVE_DEFINE_ERROR(DomainError);
DRIVE_DEFINE_ERROR(DataError);
DRIVE_DEFINE_ERROR(TransferError);
DRIVE_DEFINE_ERROR(SplitError);

#undef DRIVE_DEFINE_ERROR

}  // namespace drive
