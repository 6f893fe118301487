#pragma once

// Hybrid encryption for a single recipient.
//
// Version "1":
//   wrapped_key = X25519 sealed box of a fresh 256-bit key to the recipient
//   ciphertext  = XChaCha20-Poly1305-IETF(plaintext), 24-byte random nonce,
//                 associated data = canonical JSON of
//                 {recipient_fingerprint, version, wrapped_key}
//
// Serialized as canonical JSON with base64 byte fields:
//   {"ciphertext":..,"nonce":..,"recipient_fingerprint":..,"version":"1","wrapped_key":..}

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "bmschain/encoding.hpp"

namespace bmschain::envelope {

inline constexpr std::string_view kVersion = "1";

enum class Errc {
  InvalidKey,
  WrongRecipient,
  AuthenticationFailed,
  MalformedEnvelope,
};

std::string_view to_string(Errc code);

class EnvelopeError : public Error {
 public:
  EnvelopeError(Errc code, const std::string &message)
      : Error(std::string(to_string(code)), message), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Hex SHA-256 of an encryption public key.
std::string fingerprint_of(ByteView public_key);

class Identity {
 public:
  static constexpr std::size_t kKeySize = 32;

  static Identity generate();
  static Identity from_secret_key(ByteView secret_key);

  ByteView public_key() const { return public_key_; }
  ByteView secret_key() const { return secret_key_; }
  const std::string &fingerprint() const { return fingerprint_; }

  // Private identity file: {"fingerprint","kind":"encryption","public_key","secret_key"}.
  void save(const std::filesystem::path &path) const;
  static Identity load(const std::filesystem::path &path);
  // Public-only file: {"fingerprint","kind":"encryption-public","public_key"}.
  void save_public(const std::filesystem::path &path) const;

 private:
  Identity() = default;

  std::array<std::uint8_t, kKeySize> public_key_{};
  std::array<std::uint8_t, kKeySize> secret_key_{};
  std::string fingerprint_;
};

// Reads the public key from either a public or a private identity file.
Bytes load_public_key(const std::filesystem::path &path);

struct Envelope {
  std::string version{kVersion};
  std::string recipient_fingerprint;
  Bytes wrapped_key;
  Bytes nonce;
  Bytes ciphertext;
};

std::string serialize(const Envelope &envelope);
// Strict; any non-canonical input throws MalformedEnvelope.
Envelope parse(ByteView bytes);

// Fresh key and nonce per call.
Bytes encrypt_for(ByteView recipient_public_key, ByteView plaintext);
Bytes decrypt(ByteView envelope_bytes, const Identity &identity);

}  // namespace bmschain::envelope
