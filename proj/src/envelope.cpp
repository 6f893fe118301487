#include "bmschain/envelope.hpp"

#include <sodium.h>

#include "bmschain/crypto.hpp"

namespace bmschain::envelope {

namespace {

constexpr std::size_t kSymmetricKeySize = crypto_aead_xchacha20poly1305_ietf_KEYBYTES;
constexpr std::size_t kNonceSize = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
constexpr std::size_t kWrappedKeySize = crypto_box_SEALBYTES + kSymmetricKeySize;

std::string associated_data(const Envelope &e) {
  return canonical_dump({{"recipient_fingerprint", e.recipient_fingerprint},
                         {"version", e.version},
                         {"wrapped_key", to_base64(e.wrapped_key)}});
}

Json load_key_json(const std::filesystem::path &path) {
  std::string text = read_file(path);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  try {
    return parse_canonical(text);
  } catch (const DecodeError &e) {
    throw EnvelopeError(Errc::InvalidKey, path.string() + ": " + e.what());
  }
}

}  // namespace

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidKey: return "InvalidKey";
    case Errc::WrongRecipient: return "WrongRecipient";
    case Errc::AuthenticationFailed: return "AuthenticationFailed";
    case Errc::MalformedEnvelope: return "MalformedEnvelope";
  }
  return "Unknown";
}

std::string fingerprint_of(ByteView public_key) { return sha256(public_key).to_hex(); }

Identity Identity::generate() {
  ensure_crypto_initialized();
  Identity id;
  crypto_box_keypair(id.public_key_.data(), id.secret_key_.data());
  id.fingerprint_ = fingerprint_of(id.public_key_);
  return id;
}

Identity Identity::from_secret_key(ByteView secret_key) {
  ensure_crypto_initialized();
  if (secret_key.size() != kKeySize) throw EnvelopeError(Errc::InvalidKey, "secret key must be 32 bytes");
  Identity id;
  std::copy(secret_key.begin(), secret_key.end(), id.secret_key_.begin());
  crypto_scalarmult_base(id.public_key_.data(), id.secret_key_.data());
  id.fingerprint_ = fingerprint_of(id.public_key_);
  return id;
}

void Identity::save(const std::filesystem::path &path) const {
  Json j = {{"fingerprint", fingerprint_},
            {"kind", "encryption"},
            {"public_key", to_prefixed_hex(public_key_)},
            {"secret_key", to_prefixed_hex(secret_key_)}};
  write_file_atomic(path, canonical_dump(j) + "\n");
  std::filesystem::permissions(path,
                               std::filesystem::perms::owner_read | std::filesystem::perms::owner_write);
}

void Identity::save_public(const std::filesystem::path &path) const {
  Json j = {{"fingerprint", fingerprint_},
            {"kind", "encryption-public"},
            {"public_key", to_prefixed_hex(public_key_)}};
  write_file_atomic(path, canonical_dump(j) + "\n");
}

Identity Identity::load(const std::filesystem::path &path) {
  Json j = load_key_json(path);
  try {
    if (string_field(j, "kind") != "encryption") {
      throw EnvelopeError(Errc::InvalidKey, path.string() + ": not a private encryption identity");
    }
    Identity id = from_secret_key(from_prefixed_hex(string_field(j, "secret_key")));
    if (to_prefixed_hex(id.public_key_) != string_field(j, "public_key")) {
      throw EnvelopeError(Errc::InvalidKey, path.string() + ": public key does not match secret key");
    }
    return id;
  } catch (const DecodeError &e) {
    throw EnvelopeError(Errc::InvalidKey, path.string() + ": " + e.what());
  }
}

Bytes load_public_key(const std::filesystem::path &path) {
  Json j = load_key_json(path);
  try {
    const auto &kind = string_field(j, "kind");
    if (kind != "encryption" && kind != "encryption-public") {
      throw EnvelopeError(Errc::InvalidKey, path.string() + ": not an encryption key file");
    }
    Bytes pk = from_prefixed_hex(string_field(j, "public_key"));
    if (pk.size() != Identity::kKeySize) throw EnvelopeError(Errc::InvalidKey, "public key must be 32 bytes");
    return pk;
  } catch (const DecodeError &e) {
    throw EnvelopeError(Errc::InvalidKey, path.string() + ": " + e.what());
  }
}

std::string serialize(const Envelope &e) {
  return canonical_dump({{"ciphertext", to_base64(e.ciphertext)},
                         {"nonce", to_base64(e.nonce)},
                         {"recipient_fingerprint", e.recipient_fingerprint},
                         {"version", e.version},
                         {"wrapped_key", to_base64(e.wrapped_key)}});
}

Envelope parse(ByteView bytes) {
  Envelope e;
  std::string_view text = as_chars(bytes);
  try {
    Json j = parse_canonical(text);
    e.version = string_field(j, "version");
    e.recipient_fingerprint = string_field(j, "recipient_fingerprint");
    e.wrapped_key = from_base64(string_field(j, "wrapped_key"));
    e.nonce = from_base64(string_field(j, "nonce"));
    e.ciphertext = from_base64(string_field(j, "ciphertext"));
  } catch (const DecodeError &err) {
    throw EnvelopeError(Errc::MalformedEnvelope, err.what());
  }
  if (serialize(e) != text) throw EnvelopeError(Errc::MalformedEnvelope, "unexpected fields");
  if (e.version != kVersion) {
    throw EnvelopeError(Errc::MalformedEnvelope, "unsupported envelope version '" + e.version + "'");
  }
  if (e.recipient_fingerprint.size() != 64) {
    throw EnvelopeError(Errc::MalformedEnvelope, "recipient fingerprint must be 64 hex characters");
  }
  if (e.nonce.size() != kNonceSize) throw EnvelopeError(Errc::MalformedEnvelope, "bad nonce length");
  if (e.wrapped_key.size() != kWrappedKeySize) {
    throw EnvelopeError(Errc::MalformedEnvelope, "bad wrapped key length");
  }
  if (e.ciphertext.size() < crypto_aead_xchacha20poly1305_ietf_ABYTES) {
    throw EnvelopeError(Errc::MalformedEnvelope, "ciphertext shorter than its tag");
  }
  return e;
}

Bytes encrypt_for(ByteView recipient_public_key, ByteView plaintext) {
  ensure_crypto_initialized();
  if (recipient_public_key.size() != crypto_box_PUBLICKEYBYTES) {
    throw EnvelopeError(Errc::InvalidKey, "recipient public key must be 32 bytes");
  }
  std::array<std::uint8_t, kSymmetricKeySize> key{};
  crypto_aead_xchacha20poly1305_ietf_keygen(key.data());

  Envelope e;
  e.recipient_fingerprint = fingerprint_of(recipient_public_key);
  e.wrapped_key.resize(kWrappedKeySize);
  if (crypto_box_seal(e.wrapped_key.data(), key.data(), key.size(), recipient_public_key.data()) != 0) {
    sodium_memzero(key.data(), key.size());
    throw EnvelopeError(Errc::InvalidKey, "cannot wrap key for recipient public key");
  }
  e.nonce.resize(kNonceSize);
  random_bytes(e.nonce);

  std::string ad = associated_data(e);
  e.ciphertext.resize(plaintext.size() + crypto_aead_xchacha20poly1305_ietf_ABYTES);
  unsigned long long written = 0;
  crypto_aead_xchacha20poly1305_ietf_encrypt(
      e.ciphertext.data(), &written, plaintext.data(), plaintext.size(),
      reinterpret_cast<const unsigned char *>(ad.data()), ad.size(), nullptr, e.nonce.data(), key.data());
  e.ciphertext.resize(written);
  sodium_memzero(key.data(), key.size());

  std::string out = serialize(e);
  return Bytes(out.begin(), out.end());
}

Bytes decrypt(ByteView envelope_bytes, const Identity &identity) {
  ensure_crypto_initialized();
  Envelope e = parse(envelope_bytes);
  if (e.recipient_fingerprint != identity.fingerprint()) {
    throw EnvelopeError(Errc::WrongRecipient, "envelope is addressed to " + e.recipient_fingerprint +
                                                  ", identity is " + identity.fingerprint());
  }
  std::array<std::uint8_t, kSymmetricKeySize> key{};
  if (crypto_box_seal_open(key.data(), e.wrapped_key.data(), e.wrapped_key.size(),
                           identity.public_key().data(), identity.secret_key().data()) != 0) {
    throw EnvelopeError(Errc::AuthenticationFailed, "wrapped key does not open");
  }
  std::string ad = associated_data(e);
  Bytes plaintext(e.ciphertext.size() - crypto_aead_xchacha20poly1305_ietf_ABYTES);
  unsigned long long written = 0;
  int rc = crypto_aead_xchacha20poly1305_ietf_decrypt(
      plaintext.data(), &written, nullptr, e.ciphertext.data(), e.ciphertext.size(),
      reinterpret_cast<const unsigned char *>(ad.data()), ad.size(), e.nonce.data(), key.data());
  sodium_memzero(key.data(), key.size());
  if (rc != 0) throw EnvelopeError(Errc::AuthenticationFailed, "ciphertext failed authentication");
  plaintext.resize(written);
  return plaintext;
}

}  // namespace bmschain::envelope
