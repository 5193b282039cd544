#include "isap/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "isap/errors.hpp"

namespace isap::io {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t h) {
  for (std::byte b : bytes) {
    h ^= std::uint64_t(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t h) {
  return fnv1a64(std::as_bytes(std::span(text.data(), text.size())), h);
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[std::size_t(i)] = digits[v & 0xF];
  return s;
}

std::uint64_t parse_hex64(std::string_view s) {
  if (s.empty() || s.size() > 16) throw ValidationError("bad hash '" + std::string(s) + "'");
  std::uint64_t v = 0;
  for (char c : s) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw ValidationError("bad hash '" + std::string(s) + "'");
    v = (v << 4) | std::uint64_t(d);
  }
  return v;
}

[[gnu::noinline]] double round_to_f32(double v) { return double(float(v)); }

std::uint64_t config_hash(const KeyValues& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : config) {
    h = fnv1a64(k, h);
    h = fnv1a64("=", h);
    h = fnv1a64(v, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

const std::string& lookup(const KeyValues& kv, std::string_view key) {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  throw ValidationError("missing key '" + std::string(key) + "'");
}

namespace {

fs::path payload_path(const fs::path& manifest_path) {
  fs::path p = manifest_path;
  p += ".bin";
  return p;
}

// property_tree treats '.' as a path separator; use a custom separator so
// dotted keys stay flat within their section.
pt::ptree::path_type key_path(const std::string& section, const std::string& key) {
  return pt::ptree::path_type(section + '\x1f' + key, '\x1f');
}

KeyValues section(const pt::ptree& tree, const std::string& name) {
  KeyValues out;
  if (auto child = tree.get_child_optional(pt::ptree::path_type(name, '\x1f')))
    for (const auto& [k, v] : *child) out.emplace_back(k, v.data());
  return out;
}

}  // namespace

Manifest save(const fs::path& manifest_path, std::string kind, DType dtype,
              const KeyValues& config, const KeyValues& meta,
              std::span<const std::byte> payload) {
  Manifest m;
  m.kind = std::move(kind);
  m.dtype = dtype;
  m.payload_bytes = payload.size();
  m.payload_hash = fnv1a64(payload);
  m.config = config;
  m.config_hash = config_hash(config);
  m.meta = meta;

  if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
  {
    std::ofstream bin(payload_path(manifest_path), std::ios::binary | std::ios::trunc);
    if (!bin) throw ValidationError("cannot write " + payload_path(manifest_path).string());
    bin.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
    if (!bin) throw ValidationError("write failed: " + payload_path(manifest_path).string());
  }

  pt::ptree tree;
  tree.put(key_path("container", "kind"), m.kind);
  tree.put(key_path("container", "dtype"), dtype == DType::f32 ? "f32" : "f64");
  tree.put(key_path("container", "endianness"), "little");
  tree.put(key_path("container", "payload"), payload_path(manifest_path).filename().string());
  tree.put(key_path("container", "bytes"), m.payload_bytes);
  tree.put(key_path("container", "hash"), hex64(m.payload_hash));
  tree.put(key_path("container", "config_hash"), hex64(m.config_hash));
  for (const auto& [k, v] : config) tree.put(key_path("config", k), v);
  for (const auto& [k, v] : meta) tree.put(key_path("meta", k), v);
  std::ofstream ini(manifest_path, std::ios::trunc);
  if (!ini) throw ValidationError("cannot write " + manifest_path.string());
  pt::write_ini(ini, tree);
  return m;
}

Manifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("cannot open manifest " + manifest_path.string());
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.message());
  }
  Manifest m;
  try {
    m.kind = tree.get<std::string>(key_path("container", "kind"));
    const auto dtype = tree.get<std::string>(key_path("container", "dtype"));
    if (dtype != "f32" && dtype != "f64") throw ValidationError("unknown dtype " + dtype);
    m.dtype = dtype == "f32" ? DType::f32 : DType::f64;
    m.payload_bytes = tree.get<std::uint64_t>(key_path("container", "bytes"));
    m.payload_hash = parse_hex64(tree.get<std::string>(key_path("container", "hash")));
    m.config_hash = parse_hex64(tree.get<std::string>(key_path("container", "config_hash")));
  } catch (const pt::ptree_error& e) {
    throw ValidationError("incomplete manifest " + manifest_path.string() + ": " + e.what());
  }
  m.config = section(tree, "config");
  m.meta = section(tree, "meta");
  if (config_hash(m.config) != m.config_hash)
    throw ValidationError("config hash mismatch in " + manifest_path.string());
  return m;
}

Container load(const fs::path& manifest_path, std::string_view expected_kind) {
  Container c;
  c.manifest = read_manifest(manifest_path);
  if (c.manifest.kind != expected_kind)
    throw ValidationError(manifest_path.string() + " holds a " + c.manifest.kind + ", expected " +
                          std::string(expected_kind));
  std::ifstream bin(payload_path(manifest_path), std::ios::binary);
  if (!bin) throw ValidationError("cannot open payload " + payload_path(manifest_path).string());
  std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (raw.size() != c.manifest.payload_bytes)
    throw ValidationError("payload size " + std::to_string(raw.size()) + " != manifest " +
                          std::to_string(c.manifest.payload_bytes) + " (truncated?)");
  c.payload.resize(raw.size());
  std::memcpy(c.payload.data(), raw.data(), raw.size());
  if (fnv1a64(c.payload) != c.manifest.payload_hash)
    throw ValidationError("payload hash mismatch for " + manifest_path.string());
  return c;
}

namespace {

template <class U>
void put_le(std::vector<std::byte>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(std::byte((v >> (8 * i)) & 0xFF));
}

template <class U>
U get_le(std::span<const std::byte> in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw ValidationError("payload truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(std::uint8_t(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return v;
}

}  // namespace

void PayloadWriter::f32(float v) { put_le(bytes_, std::bit_cast<std::uint32_t>(v)); }
void PayloadWriter::u32(std::uint32_t v) { put_le(bytes_, v); }
void PayloadWriter::f64(double v) { put_le(bytes_, std::bit_cast<std::uint64_t>(v)); }

float PayloadReader::f32() { return std::bit_cast<float>(get_le<std::uint32_t>(bytes_, pos_)); }
std::uint32_t PayloadReader::u32() { return get_le<std::uint32_t>(bytes_, pos_); }
double PayloadReader::f64() { return std::bit_cast<double>(get_le<std::uint64_t>(bytes_, pos_)); }

}  // namespace isap::io
