#pragma once

// Byte strings, hex/base64 text forms, SHA-256 digests and the canonical JSON
// encoding shared by every persisted or hashed structure in the project.
//
// Canonical JSON rules:
//   - object keys sorted bytewise ascending
//   - no whitespace outside string values
//   - integers rendered as decimal strings
//   - byte strings rendered as text (hex or base64, per field)
//
// Decoders in this header are strict: a text form is accepted only if
// re-encoding the decoded value reproduces the input byte for byte.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bmschain {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using Json = nlohmann::json;

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t *>(s.data()), s.size()};
}

inline std::string_view as_chars(ByteView b) { return {reinterpret_cast<const char *>(b.data()), b.size()}; }

// Base of every error thrown by the library. `category()` is the short,
// machine-parsable name printed by the CLI.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string &message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string &category() const noexcept { return category_; }

 private:
  std::string category_;
};

// Raised by the strict decoders below.
class DecodeError : public Error {
 public:
  explicit DecodeError(const std::string &message) : Error("Malformed", message) {}
};

std::string to_hex(ByteView bytes);
// Lowercase hex only; odd length or any other character throws DecodeError.
Bytes from_hex(std::string_view hex);

std::string to_base64(ByteView bytes);
// Standard alphabet with padding; non-canonical input throws DecodeError.
Bytes from_base64(std::string_view text);

// A 256-bit SHA-256 digest.
struct Digest {
  static constexpr std::size_t kSize = 32;
  std::array<std::uint8_t, kSize> bytes{};

  ByteView view() const { return bytes; }
  bool is_zero() const;
  // "0x" + 64 lowercase hex characters.
  std::string to_prefixed_hex() const;
  static Digest from_prefixed_hex(std::string_view text);
  // 64 lowercase hex characters, no prefix.
  std::string to_hex() const;
  static Digest from_hex(std::string_view text);
  static Digest from_bytes(ByteView bytes);

  auto operator<=>(const Digest &) const = default;
};

Digest sha256(ByteView data);
inline Digest sha256(std::string_view data) { return sha256(as_bytes(data)); }

// "0x"-prefixed lowercase hex, the ledger's byte-string rendering.
std::string to_prefixed_hex(ByteView bytes);
Bytes from_prefixed_hex(std::string_view text);

// Decimal string helpers for canonical integers.
std::string decimal(std::uint64_t value);
// Digits only, no sign, no leading zeros (except "0"), fits in 64 bits.
std::uint64_t parse_u64(std::string_view text);

std::string canonical_dump(const Json &value);
// Parses `text` and requires it to already be in canonical form.
Json parse_canonical(std::string_view text);

// Typed field access for canonical objects; a missing or mistyped field
// throws DecodeError naming the field.
const std::string &string_field(const Json &object, std::string_view key);
const Json &field(const Json &object, std::string_view key);

}  // namespace bmschain
