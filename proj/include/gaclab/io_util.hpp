#pragma once

#include <charconv>
#include <string>

namespace gaclab::io {

// Shortest round-trip decimal form; stable across runs of the same build.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace gaclab::io
