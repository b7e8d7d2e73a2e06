#ifndef MTOC_RNG_HPP
#define MTOC_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "common.hpp"

namespace mtoc {

// Deterministic random source. mt19937_64 output is fully specified by the
// standard; the normal transform is done by hand because std distributions
// are implementation-defined and would break cross-platform reproducibility.
class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(gen_() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  Matrix normal_matrix(Index rows, Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = scale * normal();
    return m;
  }

  Vector normal_vector(Index size, double scale = 1.0) {
    Vector v(size);
    for (Index i = 0; i < size; ++i) v(i) = scale * normal();
    return v;
  }

private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace mtoc

#endif
