#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace mono3d {

// Raised when a training run produces a non-finite loss; carries the step.
struct DivergenceError final : std::runtime_error {
  DivergenceError(int step_, const std::string& msg)
      : std::runtime_error(msg), step(step_) {}
  int step;
};

// Raised by file readers; carries the 1-based line number when known.
struct ParseError final : std::runtime_error {
  explicit ParseError(const std::string& msg, int line_ = -1)
      : std::runtime_error(msg), line(line_) {}
  int line;
};

namespace detail {
inline void cat_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void cat_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  cat_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  detail::cat_into(os, args...);
  return os.str();
}

}  // namespace mono3d
