#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "deoccl/random.hpp"
#include "deoccl/tensor.hpp"

namespace testing_support {

template <typename T>
deoccl::Tensor<T> random_tensor(deoccl::Shape4 shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  deoccl::Tensor<T> t(shape);
  deoccl::Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return t;
}

inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central difference of f with respect to x[i].
template <typename T>
double central_difference(deoccl::Tensor<T>& x, std::size_t i, double h, const std::function<double()>& f) {
  const T saved = x[i];
  x[i] = static_cast<T>(saved + h);
  const double up = f();
  x[i] = static_cast<T>(saved - h);
  const double down = f();
  x[i] = saved;
  return (up - down) / (2.0 * h);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("deoccl-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
