#pragma once

#include <stdexcept>
#include <string>

namespace promptboost {

// Root of every error the library throws. Callers that only care about
// "something in promptboost failed" catch this one.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PROMPTBOOST_ERROR(Name)           \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

// Rendering
PROMPTBOOST_ERROR(PlacementMismatch);
PROMPTBOOST_ERROR(MultipleMasks);

// Data files
PROMPTBOOST_ERROR(FormatError);
PROMPTBOOST_ERROR(IoError);

// LM boundary
PROMPTBOOST_ERROR(TransportError);
PROMPTBOOST_ERROR(ProtocolError);
PROMPTBOOST_ERROR(VocabMismatch);

// Learning
PROMPTBOOST_ERROR(DimensionMismatch);
PROMPTBOOST_ERROR(NoValidCombination);
PROMPTBOOST_ERROR(ExhaustedRetries);
PROMPTBOOST_ERROR(EmptyPromptPool);
PROMPTBOOST_ERROR(MissingPromptRow);
PROMPTBOOST_ERROR(InsufficientExamples);

#undef PROMPTBOOST_ERROR

// Rows are missing from the cache and there is no LM to fill them.
class CacheIncomplete : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace promptboost
