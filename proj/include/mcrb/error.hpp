#pragma once

#include <stdexcept>
#include <string>

namespace mcrb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define MCRB_DEFINE_ERROR(Name)                 \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

// Linear algebra
MCRB_DEFINE_ERROR(SingularMatrix);
MCRB_DEFINE_ERROR(DimensionMismatch);
MCRB_DEFINE_ERROR(EigenFailure);
MCRB_DEFINE_ERROR(InvalidArgument);

// Selection
MCRB_DEFINE_ERROR(EmptyCandidateSet);
MCRB_DEFINE_ERROR(AllCandidatesFailed);

// DOA
MCRB_DEFINE_ERROR(OddTargetCount);
MCRB_DEFINE_ERROR(NonPositiveEigenvalue);

// AR / spectrum
MCRB_DEFINE_ERROR(UnstableModel);
MCRB_DEFINE_ERROR(LagTooLarge);
MCRB_DEFINE_ERROR(NonPositiveR0);
MCRB_DEFINE_ERROR(DegenerateStep);
MCRB_DEFINE_ERROR(SingularToeplitz);
MCRB_DEFINE_ERROR(TooFewSamples);
MCRB_DEFINE_ERROR(NonPositiveVariance);
MCRB_DEFINE_ERROR(DegeneratePartial);

// Experiments
MCRB_DEFINE_ERROR(ConfigError);
MCRB_DEFINE_ERROR(SchemaMismatch);
MCRB_DEFINE_ERROR(FailureThresholdExceeded);

#undef MCRB_DEFINE_ERROR

/// Raised by select_model when a candidate total is NaN or infinite.
class NonFiniteScore : public Error {
public:
    NonFiniteScore(int model_index, const std::string& what)
        : Error(what), model_index_(model_index) {}
    int model_index() const noexcept { return model_index_; }

private:
    int model_index_;
};

}  // namespace mcrb
