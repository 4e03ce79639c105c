#include "weedid/trust/artifact.hpp"

#include <bit>
#include <cstring>

#include "weedid/error.hpp"
#include "weedid/io/digest.hpp"
#include "weedid/io/files.hpp"

namespace weedid::trust {

std::string fingerprint(const nlohmann::json& artifact) { return io::sha256_hex(std::string_view(artifact.dump())); }

namespace {

template <typename T>
void append_le(std::string& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host expected");
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace

std::string data_fingerprint(const eval::ProbRows& rows, std::span<const int> labels) {
  std::string bytes;
  append_le<std::uint64_t>(bytes, rows.size());
  for (const auto& r : rows) {
    append_le<std::uint64_t>(bytes, r.size());
    for (double v : r) append_le(bytes, v);
  }
  append_le<std::uint64_t>(bytes, labels.size());
  for (int y : labels) append_le<std::int64_t>(bytes, y);
  return io::sha256_hex(std::string_view(bytes));
}

nlohmann::json load_artifact(const std::string& path, const std::string& expected_kind) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFile, path + ": " + e.what());
  }
  if (!j.is_object() || j.value("kind", "") != expected_kind)
    throw Error(ErrorCode::MalformedFile, path + ": expected a \"" + expected_kind + "\" calibration");
  return j;
}

void save_artifact(const std::string& path, const nlohmann::json& artifact) {
  io::write_file_atomic(path, artifact.dump(2) + "\n");
}

}  // namespace weedid::trust
