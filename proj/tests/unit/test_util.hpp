#pragma once

#include <filesystem>
#include <string>

#include "rps/common.hpp"
#include "rps/image.hpp"

namespace rps::test {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(RPS_TEST_DATA) / name;
}

inline Vector random_vector(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

inline Image random_image(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Image img(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) img(r, c) = rng.uniform();
  return img;
}

inline double rel_diff(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rps_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rps::test
