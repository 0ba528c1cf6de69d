#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace modseg {

class Error : public std::runtime_error {
 public:
  explicit Error(std::string message) : std::runtime_error(std::move(message)) {}
};

template <typename... Args>
std::string msg(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw Error(msg(args...));
}

template <typename... Args>
void require(bool condition, const Args&... args) {
  if (!condition) fail(args...);
}

}  // namespace modseg
