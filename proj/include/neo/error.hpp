#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace neo {

enum class ErrorKind {
  InvalidArgument,
  InvalidIntrinsics,
  InvalidTarget,
  OutOfRange,
  InvalidPose,
  SceneGeneration,
  SpecViolation,
  FitDiverged,
  TrainingDiverged,
  Architecture,
  Io,
  Format,
  StaleArtifact,
  MissingArtifact,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to a stage-tagged message without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace neo
