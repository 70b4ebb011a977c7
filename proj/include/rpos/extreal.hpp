#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "rpos/errors.hpp"

namespace rpos {

inline double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

// Extended nonnegative real kept in the log domain. Exact zero and +infinity
// are tagged states rather than IEEE specials, so a genuinely divergent sum
// stays distinguishable from floating-point overflow. The boundary flag marks
// infinities produced by a geometric series whose ratio landed inside the
// numerical band around 1.
class ExtReal {
 public:
  static constexpr double kGeomBoundaryBand = 1e-12;

  ExtReal() = default;

  static ExtReal zero() { return ExtReal(); }
  static ExtReal one() { return from_log(0.0); }
  static ExtReal from_log(double lg) {
    ExtReal r;
    r.tag_ = Tag::Finite;
    r.log_ = lg;
    return r;
  }
  static ExtReal from_value(double v) {
    if (v < 0 || std::isnan(v)) throw PreconditionError("ExtReal: negative or NaN value");
    if (v == 0) return zero();
    if (std::isinf(v)) return infinity();
    return from_log(std::log(v));
  }
  static ExtReal infinity(bool boundary = false) {
    ExtReal r;
    r.tag_ = Tag::Inf;
    r.boundary_ = boundary;
    return r;
  }

  bool is_zero() const { return tag_ == Tag::Zero; }
  bool is_finite() const { return tag_ == Tag::Finite; }
  bool is_inf() const { return tag_ == Tag::Inf; }
  bool boundary() const { return boundary_; }

  double log_value() const {
    if (!is_finite()) throw PreconditionError("ExtReal: log_value on non-finite value");
    return log_;
  }

  // Plain double view: 0, exp(log), or +inf. May overflow to inf for huge logs.
  double value() const {
    switch (tag_) {
      case Tag::Zero: return 0.0;
      case Tag::Finite: return std::exp(log_);
      default: return std::numeric_limits<double>::infinity();
    }
  }

  // Log view with IEEE markers, for display only.
  double log_or_marker() const {
    switch (tag_) {
      case Tag::Zero: return -std::numeric_limits<double>::infinity();
      case Tag::Finite: return log_;
      default: return std::numeric_limits<double>::infinity();
    }
  }

  friend ExtReal operator+(const ExtReal& a, const ExtReal& b) {
    if (a.is_inf() || b.is_inf()) return infinity(a.boundary_ || b.boundary_);
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    return from_log(log_add_exp(a.log_, b.log_));
  }

  // 0 * inf := 0 here: a product of excursion weights vanishes as soon as one
  // factor has no contributing walk, whatever the other factor does.
  friend ExtReal operator*(const ExtReal& a, const ExtReal& b) {
    if (a.is_zero() || b.is_zero()) return zero();
    if (a.is_inf() || b.is_inf()) return infinity(a.boundary_ || b.boundary_);
    return from_log(a.log_ + b.log_);
  }

  ExtReal& operator+=(const ExtReal& o) { return *this = *this + o; }
  ExtReal& operator*=(const ExtReal& o) { return *this = *this * o; }

  // Sum of the geometric series 1 + v + v^2 + ... Values inside the band
  // [1 - 1e-12, 1 + 1e-12] are treated as divergent and flagged "boundary".
  ExtReal geometric_series() const {
    if (is_zero()) return one();
    if (is_inf()) return infinity(boundary_);
    if (log_ >= std::log1p(kGeomBoundaryBand)) return infinity();
    if (log_ >= std::log1p(-kGeomBoundaryBand)) return infinity(true);
    // 1/(1 - v) with v = exp(log_) < 1.
    return from_log(-std::log1p(-std::exp(log_)));
  }

 private:
  enum class Tag : unsigned char { Zero, Finite, Inf };
  Tag tag_ = Tag::Zero;
  bool boundary_ = false;
  double log_ = 0.0;
};

// Closed real interval, endpoints may carry IEEE +/-inf as markers.
struct RealBracket {
  double lo = 0.0;
  double hi = 0.0;
  double mid() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

}  // namespace rpos
