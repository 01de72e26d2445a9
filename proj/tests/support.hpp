#pragma once

#include "mmg/mesh.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

namespace mmg::test {

/// nx by ny quad grid over [0, w] x [0, h] in the z = 0 plane, rows from the bottom.
inline ShellMesh grid(int nx, int ny, double w = 1.0, double h = 1.0, bool triangles = false) {
  std::vector<Vec3> c;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) c.emplace_back(w * i / nx, h * j / ny, 0.0);
  std::vector<Element> e;
  const auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (triangles) {
        e.push_back(Element::tri(id(i, j), id(i + 1, j), id(i + 1, j + 1)));
        e.push_back(Element::tri(id(i, j), id(i + 1, j + 1), id(i, j + 1)));
      } else {
        e.push_back(Element::quad(id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)));
      }
    }
  return {std::move(c), std::move(e)};
}

/// Fan of triangles around a centre node, boundary on a regular n-gon.
inline ShellMesh polygon_fan(int n, double phase = 0.0) {
  std::vector<Vec3> c{Vec3::Zero()};
  for (int i = 0; i < n; ++i) {
    const double a = phase + 2.0 * M_PI * i / n;
    c.emplace_back(std::cos(a), std::sin(a), 0.0);
  }
  std::vector<Element> e;
  for (int i = 0; i < n; ++i) e.push_back(Element::tri(0, 1 + i, 1 + (i + 1) % n));
  return {std::move(c), std::move(e)};
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("mmg_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::FILE* f = std::fopen(p.c_str(), "wb");
  REQUIRE(f != nullptr);
  std::fwrite(s.data(), 1, s.size(), f);
  std::fclose(f);
}

}  // namespace mmg::test

#define CHECK_ERROR_CODE(expr, ec)                       \
  do {                                                   \
    bool thrown_ = false;                                \
    try {                                                \
      (void)(expr);                                      \
    } catch (const ::mmg::Error& e_) {                   \
      thrown_ = true;                                    \
      CHECK_MESSAGE(e_.code() == (ec), e_.what());       \
    }                                                    \
    CHECK_MESSAGE(thrown_, "expected an mmg::Error");    \
  } while (0)
