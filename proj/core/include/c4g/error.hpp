// Error kinds and check macros shared across the library.
#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace c4g {

enum class ErrorKind {
  kShape,
  kType,
  kAxis,
  kGeometry,
  kConfig,
  kNumeric,
  kState,
  kData,
  kGroupMismatch,
  kPlacement,
  kIo,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kType: return "type";
    case ErrorKind::kAxis: return "axis";
    case ErrorKind::kGeometry: return "geometry";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kState: return "state";
    case ErrorKind::kData: return "data";
    case ErrorKind::kGroupMismatch: return "group-mismatch";
    case ErrorKind::kPlacement: return "placement";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + msg),
        kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace c4g

#define C4G_CHECK(cond, kind, msg)                        \
  do {                                                    \
    if (!(cond)) {                                        \
      std::ostringstream oss_;                            \
      oss_ << msg;                                        \
      throw ::c4g::Error((kind), oss_.str());             \
    }                                                     \
  } while (0)

#define C4G_CHECK_SHAPE(cond, msg) C4G_CHECK(cond, ::c4g::ErrorKind::kShape, msg)
#define C4G_CHECK_CONFIG(cond, msg) C4G_CHECK(cond, ::c4g::ErrorKind::kConfig, msg)
