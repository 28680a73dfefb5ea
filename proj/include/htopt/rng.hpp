#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace htopt {

// splitmix64 finalizer. Used to turn arbitrary seed material (base seeds,
// cell indices, horizons) into well-separated stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t salt) {
  return mix64(mix64(seed) ^ mix64(salt));
}

// Deterministic random stream. All distributions are built from explicit
// bit manipulation of mt19937_64 output, so a given seed produces the same
// sample sequence on every platform and toolchain.
//
// Every draw consumes a fixed number of engine steps for a given request;
// no state is cached across calls. Two consumers issuing the same sequence
// of requests from the same seed therefore see identical values.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]. Safe as a divisor and under pow(u, negative).
  double uniform_open01() { return 1.0 - uniform01(); }

  // Uniform on [-1, 1].
  double uniform_sym() { return 2.0 * uniform01() - 1.0; }

  // Standard normal via the trigonometric Box-Muller transform. Draws a
  // pair and discards the second component, keeping consumption stateless.
  double normal() {
    double a, b;
    normal_pair(a, b);
    return a;
  }

  Eigen::VectorXd normal_vector(int dim) {
    Eigen::VectorXd v(dim);
    int i = 0;
    while (i + 1 < dim) {
      normal_pair(v[i], v[i + 1]);
      i += 2;
    }
    if (i < dim) v[i] = normal();
    return v;
  }

  // Uniform direction on the unit sphere: a normalized isotropic normal
  // vector. Redraws on an exactly zero vector, which cannot occur with
  // nonzero probability but keeps the norm strictly positive.
  Eigen::VectorXd unit_vector(int dim) {
    for (;;) {
      Eigen::VectorXd v = normal_vector(dim);
      double n = v.norm();
      if (n > 0.0) return v / n;
    }
  }

 private:
  void normal_pair(double& a, double& b) {
    double u1 = uniform_open01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    a = r * std::cos(theta);
    b = r * std::sin(theta);
  }

  std::mt19937_64 gen_;
};

}  // namespace htopt
