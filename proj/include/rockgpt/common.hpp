// common.hpp: error types, shape helpers, thread pool
#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace rockgpt {

// error taxonomy: shape/geometry problems, bad config values, malformed or
// corrupt files, and anything detected mid-run (divergence, missing deps)
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};
struct RuntimeFailure : std::runtime_error {
  explicit RuntimeFailure(const std::string& m) : std::runtime_error(m) {}
};

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

// worker count for parallel_for; 0 keeps the current value
void set_threads(int n);
int thread_count();

// runs fn(begin, end) over a partition of [0, n). each index is owned by
// exactly one worker, so results never depend on the worker count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace rockgpt
