#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace lastmile {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary sibling and renames, so readers never see a
// half-written artifact.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace lastmile
