// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "tcd/common.hpp"
#include "tcd/rng.hpp"
#include "tcd/tensor.hpp"

// Asserts that the expression throws a tcd::Error carrying exactly `code`.
#define CHECK_ERROR(expr, expected_code)                                      \
  do {                                                                        \
    bool threw_ = false;                                                      \
    try {                                                                     \
      expr;                                                                   \
    } catch (const tcd::Error& e_) {                                          \
      threw_ = true;                                                          \
      CHECK_MESSAGE(e_.code() == (expected_code), "message was: ", e_.what()); \
    }                                                                         \
    CHECK_MESSAGE(threw_, #expr " did not throw");                            \
  } while (0)

namespace test {

inline tcd::Tensor3 random_tensor(int frames, int joints, uint64_t seed,
                                  double scale = 1.0) {
  tcd::Tensor3 t(frames, joints);
  tcd::Rng rng(seed);
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

// Unique scratch directory under the build tree, wiped on construction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path("test_scratch/" + name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  std::string file(const std::string& leaf) const { return (path / leaf).string(); }
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace test
