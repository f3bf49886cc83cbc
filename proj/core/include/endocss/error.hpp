#pragma once

#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace endocss {

/// Raised for invalid inputs, configs, and malformed files. The CLI maps it
/// to exit code 2; everything else exits 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void append_msg(std::ostringstream&) {}
template <typename T, typename... Rest>
void append_msg(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  append_msg(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string msg(const Args&... args) {
  std::ostringstream os;
  detail::append_msg(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw ValidationError(msg(args...));
}

template <typename... Args>
void require(bool cond, const Args&... args) {
  if (!cond) fail(args...);
}

template <typename... Args>
void warn(const Args&... args) {
  std::cerr << "[endocss] warning: " << msg(args...) << "\n";
}

}  // namespace endocss
