#pragma once

// Artifact container shared by datasets, anchor sets and checkpoints: an INI
// manifest next to a flat little-endian binary payload.
//
//   [container]  kind, dtype (f32|f64), payload (file name), bytes, hash
//   [config]     echo of the configuration that produced the artifact
//   [meta]       artifact-specific fields (counts, record layout, ...)
//
// Hashes are FNV-1a 64 in hex. The config hash covers the canonical
// "key=value\n" rendering of the [config] section in insertion order.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace isap::io {

/// Ordered key/value pairs. Keys may contain dots for grouping.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(std::string_view s);

std::uint64_t config_hash(const KeyValues& config);

/// Nearest f32 value, widened back. Out of line on purpose: GCC 11 at -O3
/// folds adjacent inlined round trips into no-ops.
double round_to_f32(double v);

/// Value lookup; throws ValidationError when the key is missing.
const std::string& lookup(const KeyValues& kv, std::string_view key);

enum class DType { f32, f64 };

struct Manifest {
  std::string kind;
  DType dtype = DType::f32;
  std::uint64_t payload_bytes = 0;
  std::uint64_t payload_hash = 0;
  KeyValues config;
  std::uint64_t config_hash = 0;
  KeyValues meta;
};

struct Container {
  Manifest manifest;
  std::vector<std::byte> payload;
};

/// Payload goes to `manifest_path` with ".bin" appended. Returns the
/// manifest as written (hashes filled in).
Manifest save(const std::filesystem::path& manifest_path, std::string kind, DType dtype,
              const KeyValues& config, const KeyValues& meta,
              std::span<const std::byte> payload);

/// Verifies kind, byte count and payload hash. Throws ValidationError on any
/// mismatch, missing file or truncated payload.
Container load(const std::filesystem::path& manifest_path, std::string_view expected_kind);

/// Manifest only, no payload verification.
Manifest read_manifest(const std::filesystem::path& manifest_path);

/// Little-endian word encoding. Integer fields share the 4-byte slots of an
/// f32 payload bit-for-bit.
class PayloadWriter {
 public:
  void f32(float v);
  void u32(std::uint32_t v);
  void f64(double v);
  const std::vector<std::byte>& bytes() const { return bytes_; }

 private:
  std::vector<std::byte> bytes_;
};

class PayloadReader {
 public:
  explicit PayloadReader(std::span<const std::byte> bytes) : bytes_(bytes) {}
  float f32();
  std::uint32_t u32();
  double f64();
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace isap::io
