#pragma once

// Closed-form accuracy laws for class-level label noise.
//
// For spread s (s = c - 1 is uniform noise) and noise level eps, with a = eps (s+1)/s:
//   noisy-label accuracy  m (1 - a)^2 + (eps/s)(2 - a)            (quadratic in eps)
//   clean-label accuracy  m / (1 + b^{((s+1)/s)(2m - 1)(eps - s/(s+1))})  (logistic)
// where m is the mean clean posterior of the true class and b the softmax base,
// stored as lambda = ln b. The tipping point is s/(s+1).

#include "lnoise/core.hpp"

#include <string>
#include <vector>

namespace lnoise::theory {

struct TheoryParams {
  int c = 2;
  int s = 1;
  double epsilon = 0.0;
  double m_bar = 1.0;
  double lambda = 50.0;

  /// Uniform-noise parameters (s = c - 1).
  static TheoryParams uniform(int c, double epsilon, double m_bar, double lambda = 50.0) {
    return {c, c - 1, epsilon, m_bar, lambda};
  }

  void validate() const {
    require(c >= 2, "c must be >= 2");
    require(s >= 1 && s <= c - 1, "spread must be in [1, c-1]");
    require(std::isfinite(epsilon) && epsilon >= 0.0 && epsilon <= 1.0, "epsilon must be in [0, 1]");
    require(std::isfinite(m_bar) && m_bar > 0.0 && m_bar <= 1.0, "m_bar must be in (0, 1]");
    require(std::isfinite(lambda) && lambda > 0.0, "lambda must be > 0");
  }

  /// The minimum-at-tipping-point result needs m_bar > 1/(s+1); below it the
  /// stationary point is a maximum.
  bool in_validity_region() const { return m_bar > 1.0 / (s + 1); }
};

/// m* (1 - eps (s+1)/s) + eps/s.
inline double noisy_posterior_class(double m_star, double epsilon, int s) {
  require(s >= 1, "spread must be >= 1");
  require(m_star >= 0.0 && m_star <= 1.0, "m_star must be in [0, 1]");
  return m_star * (1.0 - epsilon * (s + 1) / s) + epsilon / s;
}

/// m* - (c eps/(c-1)) m* + eps/(c-1), i.e. the class form with s = c - 1.
inline double noisy_posterior_uniform(double m_star, double epsilon, int c) {
  require(c >= 2, "c must be >= 2");
  return noisy_posterior_class(m_star, epsilon, c - 1);
}

inline double noisy_accuracy(const TheoryParams& p) {
  p.validate();
  const double a = p.epsilon * (p.s + 1) / p.s;
  const double lin = 1.0 - a;
  return p.m_bar * lin * lin + (p.epsilon / p.s) * (2.0 - a);
}

inline double clean_accuracy(const TheoryParams& p) {
  p.validate();
  const double g = (static_cast<double>(p.s + 1) / p.s) * (2.0 * p.m_bar - 1.0) *
                   (p.epsilon - static_cast<double>(p.s) / (p.s + 1));
  const double expo = std::clamp(p.lambda * g, -700.0, 700.0);
  return p.m_bar / (1.0 + std::exp(expo));
}

enum class TippingMode { uniform, class_dependent };

/// (c-1)/c for uniform noise, s/(s+1) for class-dependent noise.
inline double tipping_point(TippingMode mode, int c, int s = 0) {
  if (mode == TippingMode::uniform) {
    require(c >= 2, "c must be >= 2");
    return static_cast<double>(c - 1) / c;
  }
  require(s >= 1, "spread must be >= 1");
  return static_cast<double>(s) / (s + 1);
}

struct CurveRow {
  double epsilon;
  double noisy_acc;
  double clean_acc;
  int c;
  int s;
  double m_bar;
  double lambda;
};

struct Curve {
  std::vector<CurveRow> rows;
  bool outside_validity = false;  // some row has m_bar <= 1/(s+1)

  static constexpr const char* kHeader = "epsilon,noisy_acc,clean_acc,c,s,m_bar,lambda";

  std::string to_csv() const {
    std::string out = std::string(kHeader) + "\n";
    for (const auto& r : rows) {
      out += format_double(r.epsilon) + "," + format_double(r.noisy_acc) + "," + format_double(r.clean_acc) + "," +
             std::to_string(r.c) + "," + std::to_string(r.s) + "," + format_double(r.m_bar) + "," +
             format_double(r.lambda) + "\n";
    }
    return out;
  }
};

inline Curve curve(const std::vector<TheoryParams>& grid) {
  require(!grid.empty(), "theory curve needs a nonempty grid");
  Curve out;
  out.rows.reserve(grid.size());
  for (const auto& p : grid) {
    out.rows.push_back({p.epsilon, noisy_accuracy(p), clean_accuracy(p), p.c, p.s, p.m_bar, p.lambda});
    if (!p.in_validity_region()) out.outside_validity = true;
  }
  return out;
}

/// Inclusive grid start, start+step, ..., stop (endpoint kept within 1e-12).
inline std::vector<double> epsilon_grid(double start, double stop, double step) {
  require(std::isfinite(start) && std::isfinite(stop) && std::isfinite(step), "grid bounds must be finite");
  require(step > 0.0, "grid step must be > 0");
  require(stop >= start, "grid stop must be >= start");
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  for (long i = 0; i <= count; ++i) out.push_back(start + static_cast<double>(i) * step);
  if (std::abs(out.back() - stop) <= 1e-12) out.back() = stop;
  // Snap values that are a rounding error away from a short decimal.
  for (double& e : out) {
    const double r = std::round(e * 1e12) / 1e12;
    if (std::abs(r - e) <= 1e-12) e = r;
  }
  return out;
}

/// Parses "start:stop:step".
inline std::vector<double> parse_epsilon_grid(const std::string& text) {
  const auto a = text.find(':');
  const auto b = a == std::string::npos ? a : text.find(':', a + 1);
  if (a == std::string::npos || b == std::string::npos)
    throw ParameterError("grid must be start:stop:step, got '" + text + "'");
  try {
    return epsilon_grid(std::stod(text.substr(0, a)), std::stod(text.substr(a + 1, b - a - 1)),
                        std::stod(text.substr(b + 1)));
  } catch (const std::logic_error&) {
    throw ParameterError("grid must be start:stop:step, got '" + text + "'");
  }
}

}  // namespace lnoise::theory
