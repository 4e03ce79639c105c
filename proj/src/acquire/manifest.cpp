#include "weedid/acquire/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>

#include <json.hpp>

#include "weedid/core/random.hpp"
#include "weedid/error.hpp"
#include "weedid/io/csv.hpp"
#include "weedid/io/files.hpp"

namespace weedid::acquire {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::MalformedIndex, msg); }

bool valid_host_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_';
}

bool valid_checksum(std::string_view c) {
  constexpr std::string_view prefix = "sha256:";
  if (c.substr(0, prefix.size()) != prefix || c.size() != prefix.size() + 64) return false;
  return std::all_of(c.begin() + prefix.size(), c.end(),
                     [](char h) { return (h >= '0' && h <= '9') || (h >= 'a' && h <= 'f'); });
}

bool valid_filename(std::string_view f) {
  if (f.empty() || f == "." || f == "..") return false;
  return std::none_of(f.begin(), f.end(), [](char c) {
    return c == '/' || c == '\\' || static_cast<unsigned char>(c) < 0x20;
  });
}

void validate(const ManifestEntry& e) {
  parse_url(e.url);
  if (e.species_id.empty()) bad("entry without species_id");
  if (e.expected_bytes && *e.expected_bytes < 0) bad("negative expected_bytes for " + e.url);
  if (e.checksum && !valid_checksum(*e.checksum)) bad("checksum must be sha256:<64 hex>: " + *e.checksum);
  if (!valid_filename(e.filename)) bad("invalid filename '" + e.filename + "'");
  if (species_dir(e.species_id).empty()) bad("species id has no usable characters: " + e.species_id);
}

std::int64_t parse_size(const std::string& text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) bad("size is not an integer: '" + text + "'");
  return v;
}

std::string filename_from_path(std::string_view path) {
  path = path.substr(0, path.find_first_of("?#"));
  auto slash = path.rfind('/');
  std::string name(slash == std::string_view::npos ? path : path.substr(slash + 1));
  return valid_filename(name) ? name : "file";
}

std::string with_suffix(const std::string& name, int n) {
  auto dot = name.rfind('.');
  if (dot == std::string::npos || dot == 0) return name + "-" + std::to_string(n);
  return name.substr(0, dot) + "-" + std::to_string(n) + name.substr(dot);
}

}  // namespace

std::string Url::origin() const { return scheme + "://" + host + ":" + std::to_string(port); }
std::string Url::host_key() const { return host + ":" + std::to_string(port); }

Url parse_url(std::string_view text) {
  Url u;
  auto sep = text.find("://");
  if (sep == std::string_view::npos) bad("url without scheme: " + std::string(text));
  u.scheme = std::string(text.substr(0, sep));
  if (u.scheme != "http" && u.scheme != "https") bad("unsupported scheme: " + std::string(text));
  auto rest = text.substr(sep + 3);
  auto slash = rest.find('/');
  auto authority = rest.substr(0, slash);
  u.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  auto colon = authority.rfind(':');
  auto host = authority.substr(0, colon);
  if (host.empty() || !std::all_of(host.begin(), host.end(), valid_host_char))
    bad("invalid host in url: " + std::string(text));
  u.host = std::string(host);
  u.port = u.scheme == "https" ? 443 : 80;
  if (colon != std::string_view::npos) {
    auto p = authority.substr(colon + 1);
    int port = 0;
    auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), port);
    if (p.empty() || ec != std::errc{} || ptr != p.data() + p.size() || port < 1 || port > 65535)
      bad("invalid port in url: " + std::string(text));
    u.port = port;
  }
  if (std::any_of(u.path.begin(), u.path.end(), [](char c) { return static_cast<unsigned char>(c) <= 0x20; }))
    bad("whitespace or control character in url: " + std::string(text));
  return u;
}

std::string species_dir(std::string_view species_id) {
  std::string out;
  for (char c : species_id) {
    if (c == ' ') out += '_';
    else if (c == '/' || c == '\\' || static_cast<unsigned char>(c) < 0x20) continue;
    else out += c;
  }
  if (out == "." || out == "..") return {};
  return out;
}

std::string fill_template(std::string_view tpl, const ManifestEntry& e) {
  const std::pair<std::string_view, std::string> subs[] = {
      {"{species}", species_dir(e.species_id)}, {"{split}", e.split}, {"{filename}", e.filename}};
  std::string out;
  for (std::size_t i = 0; i < tpl.size();) {
    bool hit = false;
    for (const auto& [key, value] : subs) {
      if (tpl.substr(i, key.size()) == key) {
        out += value;
        i += key.size();
        hit = true;
        break;
      }
    }
    if (!hit) out += tpl[i++];
  }
  return out;
}

std::string ManifestEntry::destination() const { return fill_template(dest_template, *this); }

std::string manifest_to_ndjson(const Manifest& manifest) {
  std::string out;
  for (const auto& e : manifest) {
    json j = {{"url", e.url},
              {"species_id", e.species_id},
              {"dest_template", e.dest_template},
              {"split", e.split},
              {"filename", e.filename}};
    if (e.expected_bytes) j["expected_bytes"] = *e.expected_bytes;
    if (e.checksum) j["checksum"] = *e.checksum;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Manifest manifest_from_ndjson(std::string_view text) {
  Manifest m;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      auto j = json::parse(line);
      ManifestEntry e;
      e.url = j.at("url").get<std::string>();
      e.species_id = j.at("species_id").get<std::string>();
      e.dest_template = j.value("dest_template", e.dest_template);
      e.split = j.value("split", e.split);
      e.filename = j.at("filename").get<std::string>();
      if (j.contains("expected_bytes")) e.expected_bytes = j.at("expected_bytes").get<std::int64_t>();
      if (j.contains("checksum")) e.checksum = j.at("checksum").get<std::string>();
      validate(e);
      m.push_back(std::move(e));
    } catch (const json::exception& ex) {
      bad("manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  io::write_file_atomic(path, manifest_to_ndjson(manifest));
}

Manifest load_manifest(const std::filesystem::path& path) { return manifest_from_ndjson(io::read_file(path)); }

Manifest build_manifest(const ManifestCriteria& criteria, std::string_view index_csv) {
  std::vector<io::CsvRow> rows;
  try {
    rows = io::parse_csv(index_csv);
  } catch (const Error& e) {
    bad(std::string("index: ") + e.what());
  }
  if (rows.empty()) bad("index has no header");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) col[rows[0][i]] = i;
  for (const char* need : {"species", "url", "size"})
    if (!col.count(need)) bad(std::string("index header lacks column '") + need + "'");
  auto field = [&](const io::CsvRow& r, const std::string& name) -> std::string {
    auto it = col.find(name);
    return it == col.end() || it->second >= r.size() ? std::string{} : r[it->second];
  };

  std::vector<std::vector<ManifestEntry>> per_class(criteria.class_set.size());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() == 1 && r[0].empty()) continue;
    if (r.size() != rows[0].size()) bad("index row " + std::to_string(i) + " has the wrong column count");
    auto cls = criteria.class_set.find(field(r, "species"));
    if (!cls) continue;
    ManifestEntry e;
    e.url = field(r, "url");
    e.species_id = field(r, "species");
    auto size = field(r, "size");
    if (!size.empty()) e.expected_bytes = parse_size(size);
    auto sum = field(r, "checksum");
    if (!sum.empty()) e.checksum = sum;
    auto split = field(r, "split");
    if (!split.empty()) e.split = split;
    e.dest_template = criteria.dest_template;
    e.filename = filename_from_path(parse_url(e.url).path);
    validate(e);
    per_class[static_cast<std::size_t>(*cls)].push_back(std::move(e));
  }

  Manifest out;
  std::set<std::string> taken;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    auto& rows_c = per_class[c];
    auto rng = make_rng(criteria.seed, c);
    auto order = permutation(rng, rows_c.size());
    std::size_t keep = criteria.per_class_limit == 0 ? order.size() : std::min(order.size(), criteria.per_class_limit);
    for (std::size_t i = 0; i < keep; ++i) {
      auto e = rows_c[order[i]];
      const std::string base = e.filename;
      for (int n = 1; taken.count(e.destination()); ++n) e.filename = with_suffix(base, n);
      taken.insert(e.destination());
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace weedid::acquire
