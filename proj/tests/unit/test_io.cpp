#include <doctest.h>

#include <filesystem>

#include "liquiform/error.hpp"
#include "liquiform/io.hpp"
#include "liquiform/rng.hpp"
#include "temp_dir.hpp"

using namespace liquiform;
namespace fs = std::filesystem;

namespace {

// Every value a multiple of 1/255, so 8-bit codecs reproduce it exactly.
Image quantized_image(Rng& rng, int h, int w, int c) {
  Image img(h, w, c);
  for (auto& v : img.data()) v = static_cast<float>(rng.below(256)) / 255.0f;
  return img;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("png and pnm round trips are exact on 8-bit values") {
    testing::TempDir tmp;
    Rng rng(1);
    for (int c : {1, 3}) {
      const Image img = quantized_image(rng, 13, 21, c);
      write_image(tmp / ("a" + std::to_string(c) + ".png"), img);
      CHECK(read_image(tmp / ("a" + std::to_string(c) + ".png")) == img);
      CHECK(decode_png(encode_png(img)) == img);
      CHECK(decode_pnm(encode_pnm(img)) == img);
    }
    const Image rgb = quantized_image(rng, 7, 5, 3);
    write_image(tmp / "b.ppm", rgb);
    CHECK(read_image(tmp / "b.ppm") == rgb);
    CHECK(read_file(tmp / "b.ppm").rfind("P6", 0) == 0);
    const Image gray = quantized_image(rng, 7, 5, 1);
    write_image(tmp / "sub" / "c.pgm", gray);
    CHECK(read_image(tmp / "sub" / "c.pgm") == gray);
  }

  TEST_CASE("encoding rounds half up") {
    Image img(2, 2, 1);
    img.at(0, 0) = 0.5f / 255.0f;
    img.at(0, 1) = 1.49f / 255.0f;
    img.at(1, 0) = 1.0f;
    img.at(1, 1) = 0.49f / 255.0f;
    const std::string pgm = encode_pnm(img);
    const std::string raster = pgm.substr(pgm.size() - 4);
    CHECK(static_cast<unsigned char>(raster[0]) == 1);
    CHECK(static_cast<unsigned char>(raster[1]) == 1);
    CHECK(static_cast<unsigned char>(raster[2]) == 255);
    CHECK(static_cast<unsigned char>(raster[3]) == 0);
    CHECK(decode_png(encode_png(img)).at(0, 0) == 1.0f / 255.0f);
  }

  TEST_CASE("pnm headers with comments and wider maxval") {
    const Image img = decode_pnm(std::string("P5\n# note\n2 2\n# more\n255\n") + std::string("\x00\xff\x00\xff", 4));
    CHECK(img.width() == 2);
    CHECK(img.at(0, 0) == 0.0f);
    CHECK(img.at(0, 1) == 1.0f);
    const Image wide = decode_pnm(std::string("P5 2 2 65535\n") + std::string(8, '\xff'));
    CHECK(wide.at(1, 1) == 1.0f);
  }

  TEST_CASE("io and format errors") {
    testing::TempDir tmp;
    CHECK_THROWS_AS(read_image(tmp / "missing.png"), IoError);
    CHECK_THROWS_AS(read_file(tmp / "missing.bin"), IoError);
    write_file_atomic(tmp / "bad.png", "definitely not a png");
    CHECK_THROWS_AS(read_image(tmp / "bad.png"), FormatError);
    write_file_atomic(tmp / "bad.ppm", "P3\n1 1\n255\n0 0 0\n");
    CHECK_THROWS_AS(read_image(tmp / "bad.ppm"), FormatError);
    CHECK_THROWS_AS(decode_pnm("P6 2 2 255\nabc"), FormatError);
    CHECK_THROWS_AS(decode_pnm("P6 2 2 0\n"), FormatError);
    write_file_atomic(tmp / "x.jpg", "jpeg");
    CHECK_THROWS_AS(read_image(tmp / "x.jpg"), IoError);
    CHECK_THROWS_AS(write_image(tmp / "x.bmp", Image(2, 2, 1)), IoError);
    CHECK_THROWS_AS(write_image(tmp / "x.pgm", Image(2, 2, 3)), IoError);
  }

  TEST_CASE("atomic writes replace contents and leave no temporaries") {
    testing::TempDir tmp;
    write_file_atomic(tmp / "f.txt", "one");
    write_file_atomic(tmp / "f.txt", "two");
    CHECK(read_file(tmp / "f.txt") == "two");
    int entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp.path())) ++entries;
    CHECK(entries == 1);
  }
}
