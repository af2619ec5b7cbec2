#pragma once

#include <stdexcept>
#include <string>

namespace moi {

// All library failures derive from moi::Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MOI_DEFINE_ERROR(Name)             \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

MOI_DEFINE_ERROR(InvalidInputError);
MOI_DEFINE_ERROR(InvalidVocabularyError);
MOI_DEFINE_ERROR(InvalidConfigError);
MOI_DEFINE_ERROR(IndexError);
MOI_DEFINE_ERROR(RangeError);
MOI_DEFINE_ERROR(ParseError);
MOI_DEFINE_ERROR(ShapeError);
MOI_DEFINE_ERROR(CapacityError);
MOI_DEFINE_ERROR(MeasurementError);

#undef MOI_DEFINE_ERROR

}  // namespace moi
