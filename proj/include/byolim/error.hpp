#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace byolim {

enum class ErrorCode {
  shape_mismatch,
  invalid_axis,
  degenerate_vector,
  not_scalar,
  empty_output,
  insufficient_batch,
  label_out_of_range,
  length_mismatch,
  config_invalid,
  empty_dataset,
  missing_class_dir,
  unreadable_image,
  class_count_mismatch,
  too_few_samples,
  empty_matrix,
  degenerate_class,
  missing_gradient,
  checkpoint_incompatible,
  checkpoint_corrupt,
  io_error,
};

std::string_view error_name(ErrorCode code) noexcept;

/// Coarse failure class used for process exit codes and the C API status.
enum class ErrorCategory { other = 1, config = 2, data = 3, checkpoint = 4 };

ErrorCategory error_category(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace byolim
