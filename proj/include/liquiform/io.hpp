#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "liquiform/image.hpp"

namespace liquiform {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over path, so readers see
// either the old or the new contents. Creates missing parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Codec chosen by extension: .png (8-bit), .ppm (P6), .pgm (P5).
// Decoding maps 0..255 to [0, 1] by /255; encoding rounds half up.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);

std::string encode_png(const Image& image);
Image decode_png(std::string_view bytes);
std::string encode_pnm(const Image& image);
Image decode_pnm(std::string_view bytes);

}  // namespace liquiform
