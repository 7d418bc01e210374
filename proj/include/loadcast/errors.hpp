#ifndef LOADCAST_ERRORS_HPP
#define LOADCAST_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace loadcast {

// Error categories. The CLI maps these onto exit codes:
//   UsageError -> 1, DataError -> 2, ModelError -> 3, NumericError -> 4.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ingest / frame assembly
struct ParseError : DataError {
    using DataError::DataError;
};
struct DuplicateTimestamp : DataError {
    using DataError::DataError;
};
struct NonMonotonicTime : DataError {
    using DataError::DataError;
};
struct GapTooLong : DataError {
    using DataError::DataError;
};
struct MissingTargetTable : DataError {
    using DataError::DataError;
};
struct SpanTooShort : DataError {
    using DataError::DataError;
};

// text features
struct SimplexViolation : DataError {
    using DataError::DataError;
};
struct DimensionMismatch : DataError {
    using DataError::DataError;
};

// feature selection
struct SingularDesign : NumericError {
    using NumericError::NumericError;
};
struct SeriesTooShort : DataError {
    using DataError::DataError;
};

// models
struct ShapeMismatch : ModelError {
    using ModelError::ModelError;
};
struct NonFiniteLoss : NumericError {
    using NumericError::NumericError;
};
struct NonFiniteGradient : NumericError {
    using NumericError::NumericError;
};
struct TooFewWindows : DataError {
    using DataError::DataError;
};
struct CheckpointVersionMismatch : ModelError {
    using ModelError::ModelError;
};

// metrics
struct EmptyInput : DataError {
    using DataError::DataError;
};
struct AlignmentError : DataError {
    using DataError::DataError;
};
struct UnknownBaseline : UsageError {
    using UsageError::UsageError;
};

} // namespace loadcast

#endif
