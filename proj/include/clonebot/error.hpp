#pragma once

#include <stdexcept>
#include <string>

namespace clonebot {

/// Base of every error raised by the library. Anything deriving from this
/// signals bad input data or a violated precondition, never a library bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CLONEBOT_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

// corpus
CLONEBOT_DEFINE_ERROR(IngestionError);
CLONEBOT_DEFINE_ERROR(CorpusRejectedError);
CLONEBOT_DEFINE_ERROR(SchemaError);
CLONEBOT_DEFINE_ERROR(SplitError);

// context / retrieval
CLONEBOT_DEFINE_ERROR(EmptyContextError);
CLONEBOT_DEFINE_ERROR(UnknownSpeakerError);

// embedding / index persistence
CLONEBOT_DEFINE_ERROR(EmptyInputError);
CLONEBOT_DEFINE_ERROR(FormatError);
CLONEBOT_DEFINE_ERROR(DimensionError);
CLONEBOT_DEFINE_ERROR(DuplicateIdError);
CLONEBOT_DEFINE_ERROR(NormError);
CLONEBOT_DEFINE_ERROR(StateError);
CLONEBOT_DEFINE_ERROR(FingerprintMismatchError);

// generation / evaluation
CLONEBOT_DEFINE_ERROR(ParameterError);
CLONEBOT_DEFINE_ERROR(ModelContractError);
CLONEBOT_DEFINE_ERROR(MetricError);
CLONEBOT_DEFINE_ERROR(EvalError);

#undef CLONEBOT_DEFINE_ERROR

}  // namespace clonebot
