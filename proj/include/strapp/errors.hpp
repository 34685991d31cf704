#ifndef STRAPP_ERRORS_HPP
#define STRAPP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace strapp {

// Base class for all library errors. Validation errors (bad input data,
// malformed config) and numerical errors (solver breakdowns) derive from
// separate intermediate types so the CLI can map them to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

// --- linalg ---
struct NotSymmetric : ValidationError {
  using ValidationError::ValidationError;
};
struct IndefiniteMatrix : NumericalError {
  using NumericalError::NumericalError;
};
struct SingularSylvester : NumericalError {
  using NumericalError::NumericalError;
};
struct SingularMatrix : NumericalError {
  using NumericalError::NumericalError;
};

// --- glm ---
struct DimensionMismatch : ValidationError {
  using ValidationError::ValidationError;
};
struct InvalidResponse : ValidationError {
  using ValidationError::ValidationError;
};
struct NonConvergence : NumericalError {
  using NumericalError::NumericalError;
};
struct SeparableData : NumericalError {
  using NumericalError::NumericalError;
};

// --- transform ---
struct IndefiniteInformation : NumericalError {
  using NumericalError::NumericalError;
};
struct SingularJacobian : NumericalError {
  using NumericalError::NumericalError;
};

// --- priors ---
struct InvalidSpec : ValidationError {
  using ValidationError::ValidationError;
};

// --- sampler ---
struct InitOutOfSupport : NumericalError {
  using NumericalError::NumericalError;
};
struct SolverFailureRate : NumericalError {
  using NumericalError::NumericalError;
};

// --- analysis ---
struct EmptyChain : ValidationError {
  using ValidationError::ValidationError;
};
struct TooFewSamples : ValidationError {
  using ValidationError::ValidationError;
};

// --- closedform ---
struct SingularDesign : NumericalError {
  using NumericalError::NumericalError;
};
struct EqualVariances : ValidationError {
  using ValidationError::ValidationError;
};
struct ZeroBias : ValidationError {
  using ValidationError::ValidationError;
};

// --- io ---
struct MissingColumn : ValidationError {
  using ValidationError::ValidationError;
};
struct MissingValue : ValidationError {
  using ValidationError::ValidationError;
};
struct RankDeficientDesign : ValidationError {
  using ValidationError::ValidationError;
};
struct IoFailure : Error {
  using Error::Error;
};

}  // namespace strapp

#endif  // STRAPP_ERRORS_HPP
