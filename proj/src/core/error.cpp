#include "byolim/error.hpp"

namespace byolim {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::shape_mismatch: return "ShapeMismatch";
    case ErrorCode::invalid_axis: return "InvalidAxis";
    case ErrorCode::degenerate_vector: return "DegenerateVector";
    case ErrorCode::not_scalar: return "NotScalar";
    case ErrorCode::empty_output: return "EmptyOutput";
    case ErrorCode::insufficient_batch: return "InsufficientBatch";
    case ErrorCode::label_out_of_range: return "LabelOutOfRange";
    case ErrorCode::length_mismatch: return "LengthMismatch";
    case ErrorCode::config_invalid: return "ConfigInvalid";
    case ErrorCode::empty_dataset: return "EmptyDataset";
    case ErrorCode::missing_class_dir: return "MissingClassDir";
    case ErrorCode::unreadable_image: return "UnreadableImage";
    case ErrorCode::class_count_mismatch: return "ClassCountMismatch";
    case ErrorCode::too_few_samples: return "TooFewSamples";
    case ErrorCode::empty_matrix: return "EmptyMatrix";
    case ErrorCode::degenerate_class: return "DegenerateClass";
    case ErrorCode::missing_gradient: return "MissingGradient";
    case ErrorCode::checkpoint_incompatible: return "CheckpointIncompatible";
    case ErrorCode::checkpoint_corrupt: return "CheckpointCorrupt";
    case ErrorCode::io_error: return "IOError";
  }
  return "Unknown";
}

ErrorCategory error_category(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::config_invalid:
      return ErrorCategory::config;
    case ErrorCode::empty_dataset:
    case ErrorCode::missing_class_dir:
    case ErrorCode::unreadable_image:
    case ErrorCode::class_count_mismatch:
    case ErrorCode::too_few_samples:
    case ErrorCode::label_out_of_range:
      return ErrorCategory::data;
    case ErrorCode::checkpoint_incompatible:
    case ErrorCode::checkpoint_corrupt:
      return ErrorCategory::checkpoint;
    default:
      return ErrorCategory::other;
  }
}

}  // namespace byolim
