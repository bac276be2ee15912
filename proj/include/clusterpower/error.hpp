#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clusterpower {

enum class ErrorKind {
  InvalidParameter,
  EmptySample,
  TooFewEvents,
  DegenerateCategories,
  AllUntestable,
  FileNotFound,
  Parse,
  EmptyAfterFilter,
  Unwritable,
};

inline constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::EmptySample: return "empty-sample";
    case ErrorKind::TooFewEvents: return "too-few-events";
    case ErrorKind::DegenerateCategories: return "degenerate-categories";
    case ErrorKind::AllUntestable: return "all-untestable";
    case ErrorKind::FileNotFound: return "file-not-found";
    case ErrorKind::Parse: return "parse-error";
    case ErrorKind::EmptyAfterFilter: return "empty-after-filter";
    case ErrorKind::Unwritable: return "unwritable-path";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// A catalog too sparse for a test; reported as "untestable", not as a p-value.
inline constexpr bool is_untestable(ErrorKind kind) {
  return kind == ErrorKind::TooFewEvents || kind == ErrorKind::DegenerateCategories;
}

namespace detail {

inline void require(bool condition, ErrorKind kind, const char* message) {
  if (!condition) throw Error(kind, message);
}

inline void require_param(bool condition, const char* message) {
  require(condition, ErrorKind::InvalidParameter, message);
}

}  // namespace detail
}  // namespace clusterpower
