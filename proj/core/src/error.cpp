#include "coherence/error.hpp"

namespace coherence {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIntegrationDiverged: return "integration-diverged";
    case ErrorCode::kParse: return "parse-failure";
    case ErrorCode::kRaggedRows: return "ragged-rows";
    case ErrorCode::kNonFinite: return "non-finite-entry";
    case ErrorCode::kMissingDt: return "missing-dt";
    case ErrorCode::kRange: return "range";
    case ErrorCode::kConfig: return "configuration";
    case ErrorCode::kDegenerateData: return "degenerate-data";
    case ErrorCode::kIsolatedSample: return "isolated-sample";
    case ErrorCode::kSolver: return "solver";
    case ErrorCode::kInput: return "input";
    case ErrorCode::kDegeneratePair: return "degenerate-pair";
    case ErrorCode::kInsufficientEigs: return "insufficient-eigenpairs";
    case ErrorCode::kEstimation: return "estimation";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kOutOfDistribution: return "out-of-distribution";
    case ErrorCode::kSize: return "size";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

ErrorClass classify(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse:
    case ErrorCode::kRaggedRows:
    case ErrorCode::kMissingDt:
    case ErrorCode::kIo:
      return ErrorClass::kIo;
    case ErrorCode::kRange:
    case ErrorCode::kConfig:
    case ErrorCode::kInput:
    case ErrorCode::kShape:
    case ErrorCode::kSize:
      return ErrorClass::kConfig;
    default:
      return ErrorClass::kNumeric;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace coherence
