#pragma once

// Account-balance ledger: addresses, signed transfers, authority-sealed
// blocks, the state transition, and full-chain verification.

#include <array>
#include <boost/multiprecision/cpp_int.hpp>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bmschain/crypto.hpp"
#include "bmschain/encoding.hpp"

namespace bmschain::ledger {

// Unsigned 256-bit amount; overflow and underflow throw instead of wrapping.
using Amount = boost::multiprecision::checked_uint256_t;

std::string to_decimal(const Amount &value);
// Canonical decimal: digits only, no leading zeros, at most 2^256-1.
Amount parse_amount(std::string_view text);

inline constexpr std::uint64_t kDefaultGasLimit = 100000;
inline constexpr std::uint64_t kDefaultGasPrice = 0;

enum class Errc {
  InvalidKey,
  BadSignature,
  NonceMismatch,
  InsufficientBalance,
  TxHashMismatch,
  BlockHashMismatch,
  BrokenLink,
  MerkleRootMismatch,
  BadSealerSignature,
  UnauthorizedSealer,
  BadGenesis,
  Malformed,
};

std::string_view to_string(Errc code);

class LedgerError : public Error {
 public:
  LedgerError(Errc code, const std::string &message)
      : Error(std::string(to_string(code)), message), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// seal_block failure: the transaction at `index` in the pending list failed.
class SealRejected : public Error {
 public:
  SealRejected(std::size_t index, Errc cause, const std::string &message);
  std::size_t index() const noexcept { return index_; }
  Errc cause() const noexcept { return cause_; }

 private:
  std::size_t index_;
  Errc cause_;
};

// verify_chain failure at a given block height.
class ChainError : public Error {
 public:
  ChainError(std::uint64_t height, Errc cause, const std::string &message);
  std::uint64_t height() const noexcept { return height_; }
  Errc cause() const noexcept { return cause_; }

 private:
  std::uint64_t height_;
  Errc cause_;
};

class Address {
 public:
  static constexpr std::size_t kSize = 20;

  Address() = default;
  explicit Address(const std::array<std::uint8_t, kSize> &bytes) : bytes_(bytes) {}

  // "0x" + 40 lowercase hex characters.
  std::string to_string() const;
  static Address parse(std::string_view text);
  static bool is_valid(std::string_view text);

  const std::array<std::uint8_t, kSize> &bytes() const { return bytes_; }
  auto operator<=>(const Address &) const = default;

 private:
  std::array<std::uint8_t, kSize> bytes_{};
};

// Last 20 bytes of SHA-256(public_key). Throws LedgerError(InvalidKey) for a
// key that is not a valid Ed25519 point.
Address derive_address(ByteView public_key);

struct Account {
  Address address;
  Amount balance = 0;
  std::uint64_t nonce = 0;

  bool operator==(const Account &) const = default;
};

struct Transaction {
  Address from;
  Address to;
  Amount value = 0;
  std::uint64_t nonce = 0;
  Amount gas_limit = kDefaultGasLimit;
  Amount gas_price = kDefaultGasPrice;
  Bytes public_key;
  Bytes signature;
  Digest tx_hash;

  Amount fee() const { return gas_limit * gas_price; }
  bool operator==(const Transaction &) const = default;
};

struct TxOptions {
  Amount gas_limit = kDefaultGasLimit;
  Amount gas_price = kDefaultGasPrice;
};

// Bytes covered by the sender's signature (every field except signature and tx_hash).
std::string tx_signing_payload(const Transaction &tx);
// Canonical encoding hashed into tx_hash (everything except tx_hash).
std::string tx_hash_payload(const Transaction &tx);
Digest compute_tx_hash(const Transaction &tx);

Json to_json(const Transaction &tx);
Transaction transaction_from_json(const Json &j);

Transaction build_and_sign_tx(const Signer &sender, const Address &to, const Amount &value,
                              std::uint64_t nonce, const TxOptions &options = {});

// Initial allocations. Serialized as a flat JSON object address -> decimal.
struct GenesisConfig {
  std::map<Address, Amount> allocations;

  Amount total() const;
  Json to_json() const;
  static GenesisConfig from_json(const Json &j);
  static GenesisConfig load(const std::filesystem::path &path);
  void save(const std::filesystem::path &path) const;
};

struct ChainHead {
  Digest block_hash;
  std::uint64_t height = 0;
  bool operator==(const ChainHead &) const = default;
};

struct ChainState {
  std::map<Address, Account> accounts;
  ChainHead head;
  Address sealer;
  GenesisConfig genesis;

  // Missing accounts read as zero balance, nonce 0.
  Account account(const Address &address) const;
  Amount total_balance() const;
  // Canonical JSON of the accounts map; used for replay comparisons.
  std::string accounts_encoding() const;
};

// Signature, nonce and balance check against `state`.
void verify_tx(const Transaction &tx, const ChainState &state);
ChainState apply_tx(const Transaction &tx, const ChainState &state);
// In-place variant of apply_tx; `state` is untouched if it throws.
void apply_tx_in_place(const Transaction &tx, ChainState &state);

// Binary Merkle tree with last-element duplication on odd layers.
Digest merkle_root(std::span<const Digest> tx_hashes);

struct Block {
  std::uint64_t height = 0;
  Digest prev_hash;
  Digest merkle_root;
  std::uint64_t timestamp = 0;
  Bytes sealer;  // sealer public key
  std::vector<Transaction> transactions;
  Bytes sealer_signature;
  Digest block_hash;

  bool operator==(const Block &) const = default;
};

std::string block_signing_payload(const Block &block);
Digest compute_block_hash(const Block &block);

Json to_json(const Block &block);
Block block_from_json(const Json &j);
// One persisted line (no trailing newline).
std::string encode_block(const Block &block);
Block decode_block(std::string_view line);

// Height 0, zero prev_hash, no transactions, timestamp 0, sealed by `sealer`.
Block make_genesis_block(const Signer &sealer);
ChainState genesis_state(const GenesisConfig &config, const Block &genesis);

struct SealResult {
  Block block;
  ChainState state;
};

// All-or-nothing: a failing transaction throws SealRejected and nothing is applied.
SealResult seal_block(std::span<const Transaction> pending, const ChainState &state, const Signer &sealer,
                      std::uint64_t timestamp);

// Replays `blocks` from genesis. `authority`, when set, pins the sealer address.
// Throws ChainError on the first failure; returns the final state otherwise.
ChainState verify_chain(std::span<const Block> blocks, const GenesisConfig &genesis,
                        std::optional<Address> authority = std::nullopt);

struct TxFilter {
  std::optional<Address> from;
  std::optional<Address> to;
  std::optional<std::uint64_t> min_height;
  std::optional<std::uint64_t> max_height;
};

struct TxRow {
  Digest tx_hash;
  std::uint64_t height = 0;
  Address from;
  Address to;
  Amount value = 0;
};

std::vector<TxRow> query_transactions(std::span<const Block> blocks, const TxFilter &filter = {});

}  // namespace bmschain::ledger
