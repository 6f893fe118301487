#include "bmschain/encoding.hpp"

#include <sodium.h>

#include <algorithm>
#include <charconv>

namespace bmschain {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";
constexpr char kBase64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

int base64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string to_hex(ByteView bytes) {
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw DecodeError("hex string has odd length");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw DecodeError("invalid lowercase hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

std::string to_base64(ByteView bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out.push_back(kBase64Alphabet[(v >> 6) & 63]);
    out.push_back(kBase64Alphabet[v & 63]);
  }
  std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    std::uint32_t v = bytes[i] << 16;
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (rest == 2) {
    std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out.push_back(kBase64Alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

Bytes from_base64(std::string_view text) {
  if (text.size() % 4 != 0) throw DecodeError("base64 length not a multiple of 4");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++padding;
  Bytes out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    bool last = i + 4 == text.size();
    std::uint32_t v = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      char c = text[i + j];
      int d = 0;
      if (c == '=') {
        if (!last || j < 4 - padding) throw DecodeError("misplaced base64 padding");
      } else {
        d = base64_value(c);
        if (d < 0) throw DecodeError("invalid base64 character");
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    std::size_t emit = last ? 3 - padding : 3;
    for (std::size_t j = 0; j < emit; ++j) {
      out.push_back(static_cast<std::uint8_t>((v >> (16 - 8 * j)) & 0xff));
    }
  }
  if (to_base64(out) != text) throw DecodeError("non-canonical base64");
  return out;
}

bool Digest::is_zero() const {
  return std::all_of(bytes.begin(), bytes.end(), [](auto b) { return b == 0; });
}

std::string Digest::to_prefixed_hex() const { return bmschain::to_prefixed_hex(bytes); }

Digest Digest::from_prefixed_hex(std::string_view text) {
  return from_bytes(bmschain::from_prefixed_hex(text));
}

std::string Digest::to_hex() const { return bmschain::to_hex(bytes); }

Digest Digest::from_hex(std::string_view text) { return from_bytes(bmschain::from_hex(text)); }

Digest Digest::from_bytes(ByteView data) {
  if (data.size() != kSize) throw DecodeError("digest must be 32 bytes");
  Digest d;
  std::copy(data.begin(), data.end(), d.bytes.begin());
  return d;
}

Digest sha256(ByteView data) {
  Digest d;
  crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
  return d;
}

std::string to_prefixed_hex(ByteView bytes) { return "0x" + to_hex(bytes); }

Bytes from_prefixed_hex(std::string_view text) {
  if (text.substr(0, 2) != "0x") throw DecodeError("expected 0x prefix");
  return from_hex(text.substr(2));
}

std::string decimal(std::uint64_t value) { return std::to_string(value); }

std::uint64_t parse_u64(std::string_view text) {
  if (text.empty()) throw DecodeError("empty integer");
  if (text.size() > 1 && text[0] == '0') throw DecodeError("leading zero in integer");
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw DecodeError("invalid unsigned integer '" + std::string(text) + "'");
  }
  return value;
}

std::string canonical_dump(const Json &value) {
  return value.dump(-1, ' ', false, Json::error_handler_t::strict);
}

Json parse_canonical(std::string_view text) {
  Json value;
  try {
    value = Json::parse(text.begin(), text.end());
  } catch (const Json::exception &e) {
    throw DecodeError(std::string("invalid JSON: ") + e.what());
  }
  if (canonical_dump(value) != text) throw DecodeError("JSON is not in canonical form");
  return value;
}

const Json &field(const Json &object, std::string_view key) {
  if (!object.is_object()) throw DecodeError("expected JSON object");
  auto it = object.find(key);
  if (it == object.end()) throw DecodeError("missing field '" + std::string(key) + "'");
  return *it;
}

const std::string &string_field(const Json &object, std::string_view key) {
  const Json &v = field(object, key);
  if (!v.is_string()) throw DecodeError("field '" + std::string(key) + "' must be a string");
  return v.get_ref<const std::string &>();
}

}  // namespace bmschain
