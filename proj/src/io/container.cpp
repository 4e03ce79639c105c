#include "weedid/io/container.hpp"

#include <bit>
#include <cstring>

#include "weedid/error.hpp"
#include "weedid/io/files.hpp"

namespace weedid::io {
namespace {

static_assert(std::endian::native == std::endian::little,
              "container encoding assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace

std::string encode_container(const Container& c) {
  if (c.magic.size() != 8) throw Error(ErrorCode::MalformedFile, "container magic must be 8 bytes");
  const std::string header = c.header.dump();
  std::string out;
  out.reserve(16 + header.size() + c.payload.size() * sizeof(double));
  out += c.magic;
  put_u64(out, header.size());
  out += header;
  const auto offset = out.size();
  out.resize(offset + c.payload.size() * sizeof(double));
  if (!c.payload.empty()) std::memcpy(out.data() + offset, c.payload.data(), c.payload.size() * sizeof(double));
  return out;
}

Container decode_container(std::string_view bytes, std::string_view expected_magic) {
  if (bytes.size() < 16) throw Error(ErrorCode::MalformedFile, "container too short");
  Container c;
  c.magic = std::string(bytes.substr(0, 8));
  if (c.magic != expected_magic)
    throw Error(ErrorCode::MalformedFile, "bad magic '" + c.magic + "', expected '" + std::string(expected_magic) + "'");
  const std::uint64_t header_len = get_u64(bytes.substr(8, 8));
  if (header_len > bytes.size() - 16) throw Error(ErrorCode::MalformedFile, "header length exceeds file");
  try {
    c.header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("container header: ") + e.what());
  }
  const auto rest = bytes.substr(16 + header_len);
  if (rest.size() % sizeof(double) != 0) throw Error(ErrorCode::MalformedFile, "payload not a whole number of doubles");
  c.payload.resize(rest.size() / sizeof(double));
  if (!rest.empty()) std::memcpy(c.payload.data(), rest.data(), rest.size());
  return c;
}

void save_container(const std::filesystem::path& path, const Container& c) {
  write_file_atomic(path, encode_container(c));
}

Container load_container(const std::filesystem::path& path, std::string_view expected_magic) {
  return decode_container(read_file(path), expected_magic);
}

}  // namespace weedid::io
