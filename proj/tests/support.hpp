#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "hierwalk/types.hpp"

namespace hierwalk::testing {

/// Central finite differences of a scalar functional with respect to every
/// entry of `target`, which `eval` reads on each call.
inline Mat finite_difference(Mat& target, const std::function<double()>& eval,
                             double step = 1e-5) {
  Mat g(target.rows(), target.cols());
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    const double saved = target.data()[i];
    target.data()[i] = saved + step;
    const double up = eval();
    target.data()[i] = saved - step;
    const double down = eval();
    target.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline double rel_error(const Mat& a, const Mat& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-10});
  return (a - b).norm() / denom;
}

/// Norm comparison with an absolute floor, for parameters whose true
/// gradient is (numerically) zero. A shift-invariant head bias is the
/// canonical case: analytic and finite differences both return rounding
/// noise, which a pure relative test would reject.
inline bool grads_match(const Mat& a, const Mat& b, double rtol, double atol = 1e-8) {
  return (a - b).norm() <= atol + rtol * std::max(a.norm(), b.norm());
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    static std::mt19937_64 eng(std::random_device{}());
    path = base / ("hierwalk-test-" + std::to_string(eng()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace hierwalk::testing
