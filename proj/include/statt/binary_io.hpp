#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace statt::binary_io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

/// Float32 values serialized little-endian regardless of host order.
std::vector<char> encode_f32le(std::span<const float> values);
std::vector<float> decode_f32le(std::span<const char> bytes);

std::vector<char> read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const char> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace statt::binary_io
