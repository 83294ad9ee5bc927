#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "clnn/tensor.hpp"

#ifndef CLNN_TEST_DATA_DIR
#define CLNN_TEST_DATA_DIR "tests/data"
#endif

namespace clnn::test_support {

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(CLNN_TEST_DATA_DIR) / name; }

inline Mat<double> random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Param<double> random_param(const std::string& name, Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                                  double scale = 0.5) {
  Param<double> p(name, r, c);
  p.value = random_matrix(r, c, rng, scale);
  return p;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("clnn-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace clnn::test_support
