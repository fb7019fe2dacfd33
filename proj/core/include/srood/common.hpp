#pragma once

#include <stdexcept>
#include <string>

namespace srood {

/// Error type thrown by every library function on contract violation or I/O
/// failure.  The message is a single line suitable for direct display.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace srood
