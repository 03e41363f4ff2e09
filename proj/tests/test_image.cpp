#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "edibert/errors.hpp"
#include "edibert/image.hpp"

using namespace edibert;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path p;
  TempDir() {
    p = fs::temp_directory_path() /
        ("edibert_img_" + std::to_string(::getpid()));
    fs::create_directories(p);
  }
  ~TempDir() { fs::remove_all(p); }
  std::string file(const std::string& name) const { return (p / name).string(); }
};

}  // namespace

TEST_SUITE("image") {

TEST_CASE("to_byte quantization endpoints and rounding") {
  CHECK(to_byte(0.0f) == 0);
  CHECK(to_byte(1.0f) == 255);
  CHECK(to_byte(0.5f) == 128);  // 127.5 rounds away from zero
  CHECK(to_byte(-3.0f) == 0);
  CHECK(to_byte(7.0f) == 255);
}

TEST_CASE("pgm round trip preserves bytes") {
  TempDir td;
  Image img(3, 5, 1);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) img.at(y, x, 0) = (y * 5 + x) / 14.0f;
  write_image(img, td.file("a.pgm"));
  const Image back = read_image(td.file("a.pgm"));
  REQUIRE(back.h == 3);
  REQUIRE(back.w == 5);
  REQUIRE(back.c == 1);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x)
      CHECK(to_byte(back.at(y, x, 0)) == to_byte(img.at(y, x, 0)));
}

TEST_CASE("ppm round trip preserves bytes") {
  TempDir td;
  Image img(2, 2, 3);
  float v = 0.0f;
  for (auto& px : img.data) { px = v; v += 1.0f / 11.0f; }
  write_image(img, td.file("a.ppm"));
  const Image back = read_image(td.file("a.ppm"));
  REQUIRE(back.c == 3);
  for (size_t i = 0; i < img.data.size(); ++i)
    CHECK(to_byte(back.data[i]) == to_byte(img.data[i]));
}

TEST_CASE("header comments are skipped") {
  TempDir td;
  std::ofstream out(td.file("c.pgm"), std::ios::binary);
  out << "P5\n# a comment line\n2 1\n# another\n255\n";
  out.put(static_cast<char>(7));
  out.put(static_cast<char>(250));
  out.close();
  const Image img = read_image(td.file("c.pgm"));
  CHECK(img.w == 2);
  CHECK(img.h == 1);
  CHECK(to_byte(img.at(0, 0, 0)) == 7);
  CHECK(to_byte(img.at(0, 1, 0)) == 250);
}

TEST_CASE("non-255 maxval is rejected") {
  TempDir td;
  std::ofstream out(td.file("m.pgm"), std::ios::binary);
  out << "P5\n1 1\n65535\n";
  out.put('\0');
  out.put('\0');
  out.close();
  CHECK_THROWS_AS(read_image(td.file("m.pgm")), FormatError);
}

TEST_CASE("truncated pixel data is rejected") {
  TempDir td;
  std::ofstream out(td.file("t.pgm"), std::ios::binary);
  out << "P5\n4 4\n255\n";
  out.put('\1');  // 1 of 16 bytes
  out.close();
  CHECK_THROWS_AS(read_image(td.file("t.pgm")), FormatError);
}

TEST_CASE("unknown magic is rejected") {
  TempDir td;
  std::ofstream out(td.file("x.pgm"), std::ios::binary);
  out << "P4\n1 1\n255\n";
  out.put('\0');
  out.close();
  CHECK_THROWS_AS(read_image(td.file("x.pgm")), FormatError);
}

TEST_CASE("missing file is rejected") {
  CHECK_THROWS_AS(read_image("/nonexistent/nowhere.pgm"), FormatError);
}

TEST_CASE("clamp_ limits values into [0,1]") {
  Image img(1, 2, 1);
  img.at(0, 0, 0) = -0.5f;
  img.at(0, 1, 0) = 1.5f;
  img.clamp_();
  CHECK(img.at(0, 0, 0) == 0.0f);
  CHECK(img.at(0, 1, 0) == 1.0f);
}

}  // TEST_SUITE
