#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include <gtest/gtest.h>

#include "fm/fm.hpp"

namespace fmtest {

// Throws-with-code assertion.
#define EXPECT_FM_ERROR(stmt, err_code)                                  \
  do {                                                                   \
    try {                                                                \
      (void)(stmt);                                                      \
      ADD_FAILURE() << "expected " << fm::to_string(err_code);           \
    } catch (const fm::Error& e) {                                       \
      EXPECT_EQ(e.code(), err_code) << e.what();                         \
    }                                                                    \
  } while (0)

inline fm::Vec random_unit(const fm::Stream& s, std::size_t first, std::size_t d) {
  fm::Vec v(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = s.gaussian(first + i);
  return fm::l2_normalize(v);
}

inline fm::FeaturesMatrix random_fm(std::uint64_t seed, std::size_t t, std::size_t k, std::size_t d) {
  const fm::Stream s(seed, fm::Purpose::Instance, {t, k, d});
  std::vector<double> data;
  for (std::size_t e = 0; e < t * k; ++e) {
    const fm::Vec v = random_unit(s, e * d, d);
    data.insert(data.end(), v.begin(), v.end());
  }
  return fm::FeaturesMatrix(t, k, d, std::move(data));
}

inline fm::SyntheticWorld small_world(std::uint64_t seed, double sigma_t = 0.1, double sigma_v = 0.1) {
  fm::SyntheticWorld w;
  w.seed = seed;
  w.num_classes = 6;
  w.num_templates = 8;
  w.dim = 16;
  w.images_per_class = 10;
  w.sigma_template = sigma_t;
  w.sigma_image = sigma_v;
  return w;
}

inline std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

/// Fresh scratch directory, removed at scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("fmtest_" + name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace fmtest
