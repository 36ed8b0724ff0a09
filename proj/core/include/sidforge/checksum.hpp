#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace sidforge {

std::uint32_t crc32(std::span<const std::byte> bytes);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames on success, so a failed or
/// interrupted write never leaves a partial file at `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace sidforge
