#pragma once

// Signing keys. Everything that signs goes through `Signer`; Ed25519 is the
// only scheme shipped.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "bmschain/encoding.hpp"

namespace bmschain {

class KeyError : public Error {
 public:
  explicit KeyError(const std::string &message) : Error("InvalidKey", message) {}
};

// Initialises libsodium once; safe to call from any thread.
void ensure_crypto_initialized();

void random_bytes(std::span<std::uint8_t> out);

class Signer {
 public:
  virtual ~Signer() = default;
  virtual std::string scheme() const = 0;
  virtual Bytes public_key() const = 0;
  virtual Bytes sign(ByteView message) const = 0;
};

class Ed25519Signer final : public Signer {
 public:
  static constexpr std::size_t kSeedSize = 32;
  static constexpr std::size_t kPublicKeySize = 32;
  static constexpr std::size_t kSignatureSize = 64;

  static Ed25519Signer generate();
  static Ed25519Signer from_seed(ByteView seed);

  std::string scheme() const override { return "ed25519"; }
  Bytes public_key() const override;
  Bytes sign(ByteView message) const override;

  ByteView seed() const { return seed_; }

  // Key file: canonical JSON {"kind":"signing","public_key":"0x..","seed":"0x.."}.
  void save(const std::filesystem::path &path) const;
  static Ed25519Signer load(const std::filesystem::path &path);

 private:
  Ed25519Signer() = default;

  std::array<std::uint8_t, kSeedSize> seed_{};
  std::array<std::uint8_t, kPublicKeySize> public_key_{};
  std::array<std::uint8_t, 64> secret_key_{};
};

bool is_valid_ed25519_public_key(ByteView public_key);
bool verify_ed25519(ByteView public_key, ByteView message, ByteView signature);

// Writes `contents` to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path &path, std::string_view contents);
std::string read_file(const std::filesystem::path &path);

}  // namespace bmschain
