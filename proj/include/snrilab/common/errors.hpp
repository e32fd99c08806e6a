#pragma once

#include <stdexcept>
#include <string>

namespace snrilab {

// All domain errors derive from Error. exit_code() maps onto the CLI
// convention: 2 for usage/contract violations, 1 for internal failures.
class Error : public std::runtime_error {
 public:
  Error(std::string name, std::string what, int exit_code)
      : std::runtime_error(name + ": " + what),
        name_(std::move(name)),
        exit_code_(exit_code) {}

  const std::string& name() const { return name_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string name_;
  int exit_code_;
};

#define SNRILAB_CONTRACT_ERROR(NAME)                      \
  class NAME : public Error {                             \
   public:                                                \
    explicit NAME(const std::string& what)                \
        : Error(#NAME, what, 2) {}                        \
  }

#define SNRILAB_INTERNAL_ERROR(NAME)                      \
  class NAME : public Error {                             \
   public:                                                \
    explicit NAME(const std::string& what)                \
        : Error(#NAME, what, 1) {}                        \
  }

// audio-core
SNRILAB_CONTRACT_ERROR(SilentReference);
SNRILAB_CONTRACT_ERROR(SilentNoise);
SNRILAB_CONTRACT_ERROR(LengthMismatch);
SNRILAB_CONTRACT_ERROR(InvalidLabel);
SNRILAB_CONTRACT_ERROR(InvalidParams);
SNRILAB_CONTRACT_ERROR(TooShort);
SNRILAB_CONTRACT_ERROR(UnsupportedFormat);
SNRILAB_CONTRACT_ERROR(IoError);

// metrics
SNRILAB_CONTRACT_ERROR(DegenerateSubspace);

// grad-core
SNRILAB_CONTRACT_ERROR(ShapeMismatch);
SNRILAB_CONTRACT_ERROR(NonScalarLoss);
SNRILAB_INTERNAL_ERROR(NonFiniteValue);
SNRILAB_INTERNAL_ERROR(TapeSpent);

// trainer / harness
SNRILAB_CONTRACT_ERROR(EmptyCorpus);
SNRILAB_CONTRACT_ERROR(IncompatibleCheckpoint);
SNRILAB_CONTRACT_ERROR(SchemaMismatch);
SNRILAB_CONTRACT_ERROR(UsageError);

#undef SNRILAB_CONTRACT_ERROR
#undef SNRILAB_INTERNAL_ERROR

}  // namespace snrilab
