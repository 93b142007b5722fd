#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "transport/data.hpp"

namespace testing_support {

using transport::Dataset;
using transport::Index;

// All-observed dataset; y on target rows is masked.
inline Dataset make_dataset(const std::vector<int>& s, const std::vector<int>& a,
                            const std::vector<double>& y, const Eigen::MatrixXd& w,
                            std::vector<std::string> names = {}) {
  const Index n = static_cast<Index>(s.size());
  Eigen::VectorXi sv(n), av(n);
  Eigen::VectorXd yv(n);
  std::vector<bool> miss(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    sv[i] = s[static_cast<std::size_t>(i)];
    av[i] = a[static_cast<std::size_t>(i)];
    miss[static_cast<std::size_t>(i)] = sv[i] == 0;
    yv[i] = sv[i] == 1 ? y[static_cast<std::size_t>(i)] : std::nan("");
  }
  if (names.empty())
    for (Index j = 0; j < w.cols(); ++j) names.push_back("w" + std::to_string(j));
  return Dataset(sv, av, yv, miss, w, names);
}

// Random binary covariates, S independent of W, A fair coin, Y from `outcome`.
template <class F>
Dataset random_binary(Index n, Index p, std::uint64_t seed, F outcome, double ps = 0.5) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5), sel(ps);
  Eigen::MatrixXd w(n, p);
  std::vector<int> s(static_cast<std::size_t>(n)), a(static_cast<std::size_t>(n));
  std::vector<double> y(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) w(i, j) = coin(rng) ? 1.0 : 0.0;
    s[static_cast<std::size_t>(i)] = sel(rng) ? 1 : 0;
    a[static_cast<std::size_t>(i)] = coin(rng) ? 1 : 0;
    y[static_cast<std::size_t>(i)] = outcome(a[static_cast<std::size_t>(i)], w.row(i), rng);
  }
  return make_dataset(s, a, y, w);
}

// Least squares through a QR factorization, independent of the IRLS code path.
inline Eigen::VectorXd qr_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return x.colPivHouseholderQr().solve(y);
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace testing_support
