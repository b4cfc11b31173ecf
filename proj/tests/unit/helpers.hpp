#pragma once

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "rrcycle/common.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(RRCYCLE_FIXTURE_DIR) / name; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), {}};
}

// Scratch directory under the build tree, emptied on construction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("rrcycle_test_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

template <class F>
rrcycle::ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const rrcycle::Error& e) {
    return e.code();
  }
  FAIL("expected an rrcycle::Error");
  return rrcycle::ErrorCode::InvalidArgument;
}

}  // namespace testing
