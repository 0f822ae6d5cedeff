#include "liquiform/io.hpp"

#include <png.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "liquiform/error.hpp"

namespace liquiform {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return buf.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  static std::atomic<unsigned> counter{0};
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      throw IoError("error writing " + path.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move temporary file onto " + path.string());
  }
}

namespace {

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f));
}

}  // namespace

std::string encode_png(const Image& image) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(image.data().size());
  std::transform(image.data().begin(), image.data().end(), pixels.begin(), to_byte);

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + png.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

Image decode_png(std::string_view bytes) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw FormatError(std::string("not a readable png: ") + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw FormatError(std::string("png decode failed: ") + png.message);
  }
  std::vector<float> data(pixels.size());
  std::transform(pixels.begin(), pixels.end(), data.begin(), [](std::uint8_t v) { return v / 255.0f; });
  return Image(static_cast<int>(png.height), static_cast<int>(png.width), channels, std::move(data));
}

std::string encode_pnm(const Image& image) {
  std::string out = (image.channels() == 3 ? "P6\n" : "P5\n") + std::to_string(image.width()) + " " +
                    std::to_string(image.height()) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + image.data().size());
  std::transform(image.data().begin(), image.data().end(), out.begin() + static_cast<std::ptrdiff_t>(header),
                 [](float v) { return static_cast<char>(to_byte(v)); });
  return out;
}

Image decode_pnm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    long v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1 << 20) throw FormatError("pnm header value too large");
    }
    if (pos == start) throw FormatError("malformed pnm header");
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw FormatError("not a binary PPM/PGM file");
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  const int width = read_int(), height = read_int(), maxval = read_int();
  if (maxval < 1 || maxval > 65535) throw FormatError("pnm maxval out of range");
  ++pos;  // single whitespace before the raster
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  const std::size_t depth = maxval > 255 ? 2 : 1;
  if (bytes.size() < pos + count * depth) throw FormatError("pnm raster truncated");
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned v = static_cast<unsigned char>(bytes[pos + i * depth]);
    if (depth == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos + i * depth + 1]);
    data[i] = std::min(1.0f, static_cast<float>(v) / static_cast<float>(maxval));
  }
  return Image(height, width, channels, std::move(data));
}

Image read_image(const fs::path& path) {
  const std::string ext = lower_extension(path);
  if (ext != ".png" && ext != ".ppm" && ext != ".pgm" && ext != ".pnm") {
    throw IoError("unsupported image extension '" + ext + "' for " + path.string());
  }
  const std::string bytes = read_file(path);
  try {
    return ext == ".png" ? decode_png(bytes) : decode_pnm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_image(const fs::path& path, const Image& image) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    write_file_atomic(path, encode_png(image));
  } else if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    if (ext == ".ppm" && image.channels() != 3) {
      write_file_atomic(path, encode_pnm(to_rgb(image)));
    } else if (ext == ".pgm" && image.channels() != 1) {
      throw IoError("cannot store a colour image as .pgm: " + path.string());
    } else {
      write_file_atomic(path, encode_pnm(image));
    }
  } else {
    throw IoError("unsupported image extension '" + ext + "' for " + path.string());
  }
}

}  // namespace liquiform
