#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "relight/image.hpp"
#include "relight/rng.hpp"

using namespace relight;

namespace {
std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("image: shape and addressing") {
  Image img(4, 3, 2);
  CHECK(img.width() == 4);
  CHECK(img.height() == 3);
  CHECK(img.channels() == 2);
  CHECK(img.size() == 24);
  img.at(2, 1, 1) = 0.5;
  CHECK(img.raw()[(1 * 4 + 2) * 2 + 1] == 0.5);
}

TEST_CASE("image: pnm round trip survives quantization") {
  Rng rng(91, 1);
  for (int bit_depth : {8, 16}) {
    Image img(7, 5, 3);
    for (double& v : img.raw()) v = rng.uniform();
    const double levels = bit_depth == 8 ? 255.0 : 65535.0;
    Image quantized = img;
    for (double& v : quantized.raw()) v = std::round(v * levels) / levels;

    auto path = tmp_path("relight_test_rt.ppm");
    write_pnm(path, img, bit_depth);
    Image back = read_pnm(path);
    REQUIRE(back.width() == img.width());
    REQUIRE(back.height() == img.height());
    REQUIRE(back.channels() == 3);
    for (int i = 0; i < int(img.size()); ++i)
      CHECK(back.raw()[i] == doctest::Approx(quantized.raw()[i]).epsilon(1e-12));
    std::remove(path.c_str());
  }
}

TEST_CASE("image: single channel writes P5") {
  Image img(3, 2, 1);
  for (int i = 0; i < 6; ++i) img.raw()[i] = i / 5.0;
  auto path = tmp_path("relight_test_gray.pgm");
  write_pnm(path, img, 16);
  Image back = read_pnm(path);
  CHECK(back.channels() == 1);
  CHECK(back.at(2, 1, 0) == doctest::Approx(1.0));
  std::remove(path.c_str());
}

TEST_CASE("image: out-of-range values clamp on write") {
  Image img(2, 1, 1);
  img.at(0, 0, 0) = -0.5;
  img.at(1, 0, 0) = 1.7;
  auto path = tmp_path("relight_test_clamp.pgm");
  write_pnm(path, img, 8);
  Image back = read_pnm(path);
  CHECK(back.at(0, 0, 0) == 0.0);
  CHECK(back.at(1, 0, 0) == 1.0);
  std::remove(path.c_str());
}

TEST_CASE("masked image: set marks valid") {
  MaskedImage m(4, 4);
  CHECK_FALSE(m.valid(1, 2));
  m.set(1, 2, 0.25);
  CHECK(m.valid(1, 2));
  CHECK(m.values.at(1, 2, 0) == 0.25);
  CHECK_FALSE(m.valid(0, 0));
}
