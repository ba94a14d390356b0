#pragma once

#include <cstdint>
#include <cmath>
#include <random>

#include <Eigen/Core>

namespace pcfm {

// Stream-keyed RNG. Every consumer derives its own key from
// (seed, ids...) so that parallel replications never share state and the
// draw sequence is independent of scheduling.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t key, std::uint64_t id) {
  return splitmix64(key ^ (id + 0x9e3779b97f4a7c15ULL + (key << 6) + (key >> 2)));
}

template <typename... Ids>
std::uint64_t derive_key(std::uint64_t seed, Ids... ids) {
  std::uint64_t key = splitmix64(seed);
  ((key = mix_key(key, static_cast<std::uint64_t>(ids))), ...);
  return key;
}

class Rng {
 public:
  explicit Rng(std::uint64_t key) : eng_(key) {}

  // uniform on [0,1)
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Box-Muller with pair caching; avoids std::normal_distribution so the
  // stream is identical across standard libraries.
  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * 3.14159265358979323846 * u2;
    spare_ = rad * std::sin(ang);
    have_spare_ = true;
    return rad * std::cos(ang);
  }

  Eigen::MatrixXd gauss_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gauss();
    return m;
  }

  Eigen::VectorXd gauss_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = gauss();
    return v;
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pcfm
