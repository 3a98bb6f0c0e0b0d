#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace itsc {

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable tag, used by the CLI's error line.
class Error : public std::runtime_error {
 public:
  Error(std::string_view kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  std::string_view kind() const noexcept { return kind_; }

 private:
  std::string_view kind_;
};

#define ITSC_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(tag, message) {} \
  };

ITSC_DEFINE_ERROR(ConfigError, "config")
ITSC_DEFINE_ERROR(SizingError, "sizing")
ITSC_DEFINE_ERROR(ParameterError, "parameter")
ITSC_DEFINE_ERROR(ShapeError, "shape")
ITSC_DEFINE_ERROR(InputError, "input")
ITSC_DEFINE_ERROR(SpecError, "spec")
ITSC_DEFINE_ERROR(TrainingError, "training")
ITSC_DEFINE_ERROR(SingularityError, "singularity")
ITSC_DEFINE_ERROR(DegenerateWindowError, "degenerate_window")
ITSC_DEFINE_ERROR(FormatError, "format")
ITSC_DEFINE_ERROR(IoError, "io")
ITSC_DEFINE_ERROR(DependencyError, "dependency")

#undef ITSC_DEFINE_ERROR

}  // namespace itsc
