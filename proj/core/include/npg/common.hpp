// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace npg {

#ifdef NPG_REAL_FLOAT32
using real = float;
#else
using real = double;
#endif

// Thrown by all NPG_CHECK failures and explicit validation errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
[[noreturn]] inline void check_failed(const char* expr, const char* file, int line,
                                      const std::string& msg) {
  std::ostringstream os;
  os << "check failed: " << expr;
  if (!msg.empty()) os << " -- " << msg;
  os << " (" << file << ":" << line << ")";
  throw Error(os.str());
}

struct MsgStream {
  std::ostringstream os;
  template <typename T>
  MsgStream& operator<<(const T& v) {
    os << v;
    return *this;
  }
  std::string str() const { return os.str(); }
};
}  // namespace detail

#define NPG_CHECK(cond, ...)                                                     \
  do {                                                                           \
    if (!(cond)) {                                                               \
      ::npg::detail::MsgStream npg_ms__;                                         \
      npg_ms__ __VA_OPT__(<<) __VA_ARGS__;                                       \
      ::npg::detail::check_failed(#cond, __FILE__, __LINE__, npg_ms__.str());    \
    }                                                                            \
  } while (0)

// Single RNG type for every stochastic choice in the engine. All call sites
// seed explicitly; there is no use of std::random_device anywhere, so a fixed
// seed reproduces a run bitwise.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  real uniform(real lo = 0, real hi = 1) {
    return lo + (hi - lo) * real(std::generate_canonical<double, 53>(engine_));
  }
  real normal(real mean = 0, real stddev = 1) {
    return mean + stddev * real(normal_(engine_));
  }
  // Uniform integer in [0, n).
  int64_t index(int64_t n) {
    return int64_t(std::uniform_int_distribution<uint64_t>(0, uint64_t(n) - 1)(engine_));
  }
  uint64_t next_seed() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace npg
