#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vaforge {

// Root of every error thrown by the library. Callers that only need to
// distinguish "our" failures from std ones can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VAFORGE_DEFINE_ERROR(Name)            \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  };

// core_data
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};
VAFORGE_DEFINE_ERROR(SchemaError)
VAFORGE_DEFINE_ERROR(LabelError)
VAFORGE_DEFINE_ERROR(EmptyClassError)
VAFORGE_DEFINE_ERROR(FoldError)

// text_features / tabular_text
VAFORGE_DEFINE_ERROR(EmptyVocabularyError)
VAFORGE_DEFINE_ERROR(DimensionError)
VAFORGE_DEFINE_ERROR(UnknownIndicatorError)

// learners / fusion
VAFORGE_DEFINE_ERROR(DegenerateDataError)
VAFORGE_DEFINE_ERROR(NonFiniteError)
VAFORGE_DEFINE_ERROR(StochasticityError)
VAFORGE_DEFINE_ERROR(DuplicateIdError)
VAFORGE_DEFINE_ERROR(AlignmentError)
VAFORGE_DEFINE_ERROR(EmptyEnsembleError)
VAFORGE_DEFINE_ERROR(HyperparamError)

// metrics
VAFORGE_DEFINE_ERROR(DegenerateError)

// hpo
VAFORGE_DEFINE_ERROR(AllTrialsPrunedError)

// sufficiency
VAFORGE_DEFINE_ERROR(RangeError)
VAFORGE_DEFINE_ERROR(DegenerateGainError)

// cli
VAFORGE_DEFINE_ERROR(ConfigError)

#undef VAFORGE_DEFINE_ERROR

}  // namespace vaforge
