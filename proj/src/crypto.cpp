#include "bmschain/crypto.hpp"

#include <sodium.h>

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

namespace bmschain {

void ensure_crypto_initialized() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw Error("CryptoInit", "libsodium initialisation failed");
}

void random_bytes(std::span<std::uint8_t> out) {
  ensure_crypto_initialized();
  randombytes_buf(out.data(), out.size());
}

Ed25519Signer Ed25519Signer::generate() {
  std::array<std::uint8_t, kSeedSize> seed{};
  random_bytes(seed);
  auto signer = from_seed(seed);
  sodium_memzero(seed.data(), seed.size());
  return signer;
}

Ed25519Signer Ed25519Signer::from_seed(ByteView seed) {
  ensure_crypto_initialized();
  if (seed.size() != kSeedSize) throw KeyError("ed25519 seed must be 32 bytes");
  Ed25519Signer s;
  std::copy(seed.begin(), seed.end(), s.seed_.begin());
  crypto_sign_seed_keypair(s.public_key_.data(), s.secret_key_.data(), s.seed_.data());
  return s;
}

Bytes Ed25519Signer::public_key() const { return {public_key_.begin(), public_key_.end()}; }

Bytes Ed25519Signer::sign(ByteView message) const {
  Bytes sig(crypto_sign_BYTES);
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_key_.data());
  return sig;
}

void Ed25519Signer::save(const std::filesystem::path &path) const {
  Json j = {
      {"kind", "signing"}, {"public_key", to_prefixed_hex(public_key_)}, {"seed", to_prefixed_hex(seed_)}};
  write_file_atomic(path, canonical_dump(j) + "\n");
  std::filesystem::permissions(path,
                               std::filesystem::perms::owner_read | std::filesystem::perms::owner_write);
}

Ed25519Signer Ed25519Signer::load(const std::filesystem::path &path) {
  std::string text = read_file(path);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  try {
    Json j = parse_canonical(text);
    if (string_field(j, "kind") != "signing") throw KeyError("not a signing key file");
    auto signer = from_seed(from_prefixed_hex(string_field(j, "seed")));
    if (to_prefixed_hex(signer.public_key()) != string_field(j, "public_key")) {
      throw KeyError("public key does not match seed");
    }
    return signer;
  } catch (const DecodeError &e) {
    throw KeyError(path.string() + ": " + e.what());
  }
}

bool is_valid_ed25519_public_key(ByteView public_key) {
  ensure_crypto_initialized();
  return public_key.size() == crypto_sign_PUBLICKEYBYTES &&
         crypto_core_ed25519_is_valid_point(public_key.data()) == 1;
}

bool verify_ed25519(ByteView public_key, ByteView message, ByteView signature) {
  ensure_crypto_initialized();
  if (public_key.size() != crypto_sign_PUBLICKEYBYTES) return false;
  if (signature.size() != crypto_sign_BYTES) return false;
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), public_key.data()) ==
         0;
}

void write_file_atomic(const std::filesystem::path &path, std::string_view contents) {
  static std::atomic<std::uint64_t> counter{0};
  auto tmp = path;
  std::ostringstream suffix;
  suffix << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
         << counter.fetch_add(1);
  tmp += suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IoError", "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error("IoError", "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("IoError", "rename to " + path.string() + " failed: " + ec.message());
  }
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace bmschain
