#include "tealeaf/error.hpp"

namespace tealeaf {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingRoot: return "MissingRoot";
    case ErrorCode::EmptyClassDirectory: return "EmptyClassDirectory";
    case ErrorCode::UndecodableImage: return "UndecodableImage";
    case ErrorCode::RatioSumInvalid: return "RatioSumInvalid";
    case ErrorCode::SplitInfeasible: return "SplitInfeasible";
    case ErrorCode::EmptyTrainClass: return "EmptyTrainClass";
    case ErrorCode::UnknownArchitecture: return "UnknownArchitecture";
    case ErrorCode::WeightsUnavailable: return "WeightsUnavailable";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::RegistryMismatch: return "RegistryMismatch";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::GradientUnavailable: return "GradientUnavailable";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::LayerNotFound: return "LayerNotFound";
    case ErrorCode::PatchLargerThanImage: return "PatchLargerThanImage";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::UnsupportedMediaType: return "UnsupportedMediaType";
    case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
    case ErrorCode::InternalInferenceError: return "InternalInferenceError";
    case ErrorCode::PortInUse: return "PortInUse";
    case ErrorCode::UnknownSubcommand: return "UnknownSubcommand";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::OutputExists: return "OutputExists";
  }
  return "Unknown";
}

bool is_user_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::IoFailure:
    case ErrorCode::GradientUnavailable:
    case ErrorCode::InternalInferenceError:
    case ErrorCode::PortInUse:
      return false;
    default:
      return true;
  }
}

}  // namespace tealeaf
