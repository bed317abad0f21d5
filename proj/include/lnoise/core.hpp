#pragma once

// Shared vocabulary for the lnoise library: error types, numeric helpers,
// deterministic seeding.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lnoise {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Labels = std::vector<int>;

// ---------------------------------------------------------------------------
// Errors. The CLI maps each family onto a process exit code.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
struct ParameterError : Error {
  using Error::Error;
};

/// Operation invoked on an object in the wrong state (e.g. an uncalibrated spec).
struct StateError : Error {
  using Error::Error;
};

/// Malformed input file. `line` is 1-based, 0 when not tied to a line.
struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line_no = 0)
      : Error(line_no ? "line " + std::to_string(line_no) + ": " + what : what), line(line_no) {}
  std::size_t line;
};

/// Non-finite or degenerate arithmetic.
struct NumericalError : Error {
  using Error::Error;
};

/// Iterative procedure failed to reach its tolerance.
struct ConvergenceError : NumericalError {
  using NumericalError::NumericalError;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ParameterError(msg);
}

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

inline double log_sum_exp(std::span<const double> v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

inline double log_sum_exp(const Vector& v) {
  return log_sum_exp(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

/// Index of the largest entry; ties go to the lowest index.
inline int argmax(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

inline int argmax(const Vector& v) {
  return argmax(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

/// Largest entry excluding `skip`; ties go to the lowest index.
inline int argmax_excluding(const Vector& v, int skip) {
  int best = -1;
  for (int i = 0; i < v.size(); ++i) {
    if (i == skip) continue;
    if (best < 0 || v[i] > v[best]) best = i;
  }
  return best;
}

inline double clip01(double x) { return std::clamp(x, 0.0, 1.0); }

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer: a bijective 64-bit avalanche mix.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Order-sensitive combination of a running hash with one more key field.
constexpr std::uint64_t mix64(std::uint64_t h, std::uint64_t field) {
  return mix64(h ^ mix64(field));
}

template <typename... Fields>
constexpr std::uint64_t derive_seed(std::uint64_t root, Fields... fields) {
  std::uint64_t h = mix64(root);
  ((h = mix64(h, static_cast<std::uint64_t>(fields))), ...);
  return h;
}

inline std::uint64_t hash_string(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Shortest round-trippable text for a double ("%.17g" trimmed when exact).
inline std::string format_double(double x) {
  char buf[64];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

}  // namespace lnoise
