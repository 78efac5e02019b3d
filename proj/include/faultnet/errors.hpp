#pragma once

#include <stdexcept>
#include <string>

namespace faultnet {

// Base class for every error thrown by the library. Each failure mode gets
// its own type so callers can catch exactly what they care about.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define FAULTNET_DEFINE_ERROR(Name)                         \
  class Name : public Error {                               \
   public:                                                  \
    explicit Name(const std::string& what) : Error(what) {} \
  };

// File ingest
FAULTNET_DEFINE_ERROR(BadMagic)
FAULTNET_DEFINE_ERROR(TruncatedFile)
FAULTNET_DEFINE_ERROR(UnsupportedElement)
FAULTNET_DEFINE_ERROR(ParseError)
FAULTNET_DEFINE_ERROR(EmptyFile)
FAULTNET_DEFINE_ERROR(IoError)

// Segmentation / datasets
FAULTNET_DEFINE_ERROR(TooShort)
FAULTNET_DEFINE_ERROR(UnknownLabel)
FAULTNET_DEFINE_ERROR(EmptyDataset)
FAULTNET_DEFINE_ERROR(InvalidSpec)

// Featurization
FAULTNET_DEFINE_ERROR(DegenerateSignal)

// Tensor engine / models
FAULTNET_DEFINE_ERROR(ShapeMismatch)
FAULTNET_DEFINE_ERROR(NonFinite)
FAULTNET_DEFINE_ERROR(InvalidMode)
FAULTNET_DEFINE_ERROR(InvalidP)
FAULTNET_DEFINE_ERROR(BadLabel)
FAULTNET_DEFINE_ERROR(InvalidConfig)

// Baselines
FAULTNET_DEFINE_ERROR(SingleClass)
FAULTNET_DEFINE_ERROR(EmptyMatrix)
FAULTNET_DEFINE_ERROR(KTooLarge)

// Evaluation
FAULTNET_DEFINE_ERROR(ClassTooSmall)
FAULTNET_DEFINE_ERROR(LengthMismatch)
FAULTNET_DEFINE_ERROR(ZeroPowerSignal)
FAULTNET_DEFINE_ERROR(FoldMismatch)

#undef FAULTNET_DEFINE_ERROR

}  // namespace faultnet
