#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace weedid::io {

// Binary container shared by checkpoints and corpora:
//
//   bytes 0..7    magic, 8 ASCII bytes (e.g. "WEEDCKPT")
//   bytes 8..15   header length H, unsigned 64-bit little-endian
//   bytes 16..    H bytes of UTF-8 JSON (keys sorted, no whitespace)
//   then          payload: IEEE-754 binary64 values, little-endian
//
// The header describes how the payload is sliced; the container itself only
// knows "JSON then doubles".
struct Container {
  std::string magic;
  nlohmann::json header;
  std::vector<double> payload;
};

std::string encode_container(const Container& c);
Container decode_container(std::string_view bytes, std::string_view expected_magic);

void save_container(const std::filesystem::path& path, const Container& c);
Container load_container(const std::filesystem::path& path, std::string_view expected_magic);

}  // namespace weedid::io
