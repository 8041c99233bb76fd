#pragma once

#include <stdexcept>
#include <string>

namespace deepgp {

/// Broad failure classes. The CLI maps each one onto a process exit code.
enum class ErrorCategory { Config, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define DEEPGP_DEFINE_ERROR(Name, Category)                 \
  class Name : public Error {                               \
   public:                                                  \
    explicit Name(const std::string& what)                  \
        : Error(ErrorCategory::Category, #Name ": " + what) {} \
  };

DEEPGP_DEFINE_ERROR(NotPositiveDefinite, Numeric)
DEEPGP_DEFINE_ERROR(NonFiniteGradient, Numeric)
DEEPGP_DEFINE_ERROR(DimensionMismatch, Data)
DEEPGP_DEFINE_ERROR(LengthMismatch, Data)
DEEPGP_DEFINE_ERROR(TooManyPoints, Data)
DEEPGP_DEFINE_ERROR(TooFewPoints, Data)
DEEPGP_DEFINE_ERROR(TooFewSamples, Data)
DEEPGP_DEFINE_ERROR(EmptyInput, Data)
DEEPGP_DEFINE_ERROR(EmptyBatch, Data)
DEEPGP_DEFINE_ERROR(ZeroVariance, Data)
DEEPGP_DEFINE_ERROR(SchemaMismatch, Data)
DEEPGP_DEFINE_ERROR(EmptyAfterFiltering, Data)
DEEPGP_DEFINE_ERROR(KTooLarge, Data)
DEEPGP_DEFINE_ERROR(InfeasibleSplit, Data)
DEEPGP_DEFINE_ERROR(SizeTooLargeForExactDraw, Data)
DEEPGP_DEFINE_ERROR(ArchitectureInvalid, Config)
DEEPGP_DEFINE_ERROR(ConfigError, Config)
DEEPGP_DEFINE_ERROR(FormatError, Data)

#undef DEEPGP_DEFINE_ERROR

}  // namespace deepgp
