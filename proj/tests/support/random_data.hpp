#pragma once

#include <random>

#include "esld/types.hpp"
#include "oracles/naive_linalg.hpp"

namespace synth {

// n x d standard normal rows shifted by `shift` in every coordinate, with a
// random per-column scale so covariances are not isotropic.
inline esld::Matrix gaussian_rows(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d, double shift,
                                  const std::vector<double>& scale) {
  std::normal_distribution<double> g(0.0, 1.0);
  esld::Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = shift * (j % 2 == 0 ? 1.0 : -0.5) + scale[j] * g(rng);
  }
  return x;
}

inline std::vector<double> random_scales(std::mt19937_64& rng, std::size_t d) {
  std::uniform_real_distribution<double> u(0.3, 2.5);
  std::vector<double> s(d);
  for (auto& v : s) v = u(rng);
  return s;
}

inline oracle::Rows to_rows(const esld::Matrix& m) {
  oracle::Rows out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline double frobenius_rel_error(const esld::Matrix& a, const oracle::Rows& b) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double diff = a(i, j) - b[i][j];
      num += diff * diff;
      den += b[i][j] * b[i][j];
    }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

inline esld::Matrix centered(const esld::Matrix& x) {
  esld::Matrix c = x;
  c.rowwise() -= x.colwise().mean();
  return c;
}

}  // namespace synth
