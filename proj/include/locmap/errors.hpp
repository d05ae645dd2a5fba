#pragma once

#include <stdexcept>
#include <string>

namespace locmap {

/// Base for every failure caused by input data (bad files, inconsistent
/// records, degenerate geometry). The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

#define LOCMAP_DEFINE_ERROR(Name)  \
  class Name : public Error {      \
   public:                         \
    using Error::Error;            \
  }

// datastore
LOCMAP_DEFINE_ERROR(IoError);
LOCMAP_DEFINE_ERROR(MalformedCsv);
LOCMAP_DEFINE_ERROR(UnknownSensorRef);
LOCMAP_DEFINE_ERROR(DanglingObservation);
LOCMAP_DEFINE_ERROR(BinaryShapeMismatch);
LOCMAP_DEFINE_ERROR(InvariantViolation);
LOCMAP_DEFINE_ERROR(SizeMismatch);
LOCMAP_DEFINE_ERROR(NegativeDepth);

// geometry / estimation
LOCMAP_DEFINE_ERROR(NonPositiveDepth);
LOCMAP_DEFINE_ERROR(DegenerateGeometry);
LOCMAP_DEFINE_ERROR(CollinearPoints);
LOCMAP_DEFINE_ERROR(NoRealSolution);

// pipeline stages
LOCMAP_DEFINE_ERROR(DimensionMismatch);
LOCMAP_DEFINE_ERROR(WeightShapeMismatch);
LOCMAP_DEFINE_ERROR(MissingPose);
LOCMAP_DEFINE_ERROR(MissingDepth);
LOCMAP_DEFINE_ERROR(MissingGroundTruth);
LOCMAP_DEFINE_ERROR(NoLocalizedQueries);

#undef LOCMAP_DEFINE_ERROR

}  // namespace locmap
