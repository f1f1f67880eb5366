#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include <doctest.h>

#include "reskmd/error.hpp"
#include "reskmd/types.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("reskmd_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename Fn>
reskmd::ErrorKind error_kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const reskmd::Error& e) {
    return e.kind();
  }
  FAIL("expected a reskmd::Error");
  return reskmd::ErrorKind::Io;
}

inline reskmd::MatrixXd gaussian_matrix(reskmd::Index rows, reskmd::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  return reskmd::MatrixXd::NullaryExpr(rows, cols, [&] { return normal(rng); });
}

}  // namespace testutil

#define CHECK_ERROR_KIND(expr, kind) CHECK(testutil::error_kind_of([&] { (void)(expr); }) == (kind))
