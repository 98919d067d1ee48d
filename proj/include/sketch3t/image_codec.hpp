#pragma once

#include "sketch3t/sketch.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sketch3t {

/// Key/value pairs stored as uncompressed tEXt chunks.
using PngText = std::vector<std::pair<std::string, std::string>>;

/// 8-bit RGB PNG; channel values are rounded from [0,1] to 0..255.
std::vector<std::uint8_t> encode_png(const RasterImage& img, const PngText& text = {});
/// Decodes an 8-bit RGB (or grey / RGBA, converted) PNG into [0,1] values k/255.
RasterImage decode_png(const std::vector<std::uint8_t>& bytes);

PngText png_text_chunks(const std::vector<std::uint8_t>& bytes);

void write_png(const RasterImage& img, const std::filesystem::path& path, const PngText& text = {});

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
/// Throws Error on characters outside the standard alphabet.
std::vector<std::uint8_t> base64_decode(std::string_view text);

} // namespace sketch3t
