#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sld {

/// Base class of every error raised by the library. `stage()` is set when an
/// error propagates out of a pipeline stage so batch reports can name it.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}

  const std::string& stage() const { return stage_; }
  void set_stage(std::string stage) { stage_ = std::move(stage); }

private:
  std::string stage_;
};

class FormatError : public Error {
public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"), offset_(byte_offset) {}

  std::size_t byte_offset() const { return offset_; }

private:
  std::size_t offset_;
};

class ValidationError : public Error {
  using Error::Error;
};

class IoError : public Error {
  using Error::Error;
};

class ParameterError : public Error {
  using Error::Error;
};

/// Zero-area faces and similar numerically singular input.
class SingularGeometryError : public Error {
  using Error::Error;
};

/// Input whose shape does not determine the requested quantity (coplanar
/// points, isotropic covariance, ...).
class DegenerateGeometryError : public Error {
  using Error::Error;
};

class NoPathError : public Error {
  using Error::Error;
};

class SegmentationError : public Error {
  using Error::Error;
};

class DetectionError : public Error {
  using Error::Error;
};

} // namespace sld
