#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coherence {

enum class ErrorCode {
  kIntegrationDiverged,
  kParse,
  kRaggedRows,
  kNonFinite,
  kMissingDt,
  kRange,
  kConfig,
  kDegenerateData,
  kIsolatedSample,
  kSolver,
  kInput,
  kDegeneratePair,
  kInsufficientEigs,
  kEstimation,
  kShape,
  kOutOfDistribution,
  kSize,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Broad failure class used to pick a process exit status.
enum class ErrorClass { kConfig, kNumeric, kIo };

ErrorClass classify(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace coherence
