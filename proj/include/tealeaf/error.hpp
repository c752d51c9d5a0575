#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tealeaf {

enum class ErrorCode {
  InvalidArgument,
  MissingRoot,
  EmptyClassDirectory,
  UndecodableImage,
  RatioSumInvalid,
  SplitInfeasible,
  EmptyTrainClass,
  UnknownArchitecture,
  WeightsUnavailable,
  CorruptCheckpoint,
  RegistryMismatch,
  EmptySplit,
  NonFiniteLoss,
  IoFailure,
  GradientUnavailable,
  LengthMismatch,
  LabelOutOfRange,
  EmptyMatrix,
  LayerNotFound,
  PatchLargerThanImage,
  ShapeMismatch,
  UnsupportedMediaType,
  PayloadTooLarge,
  InternalInferenceError,
  PortInUse,
  UnknownSubcommand,
  ConfigInvalid,
  OutputExists,
};

std::string_view to_string(ErrorCode code) noexcept;

// Errors caused by bad input (data, config, arguments) rather than a bug or
// an environment failure. The CLI maps these to exit code 1.
bool is_user_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace tealeaf
