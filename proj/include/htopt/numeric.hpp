#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

namespace htopt {

// Neumaier compensated summation. Long running sums of gradient norms feed
// the average-gradient metric, where plain accumulation loses digits once
// the sum dwarfs individual terms.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }

  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Sign with sign(0) = +1.
inline double sign_or_one(double v) { return v < 0.0 ? -1.0 : 1.0; }

inline double relative_gap(double a, double b) {
  double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) / scale;
}

// Shortest round-trip decimal form. Output files are compared bytewise
// across re-runs, so formatting must not depend on locale or printf
// implementation details.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace htopt
