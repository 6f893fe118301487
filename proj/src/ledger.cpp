#include "bmschain/ledger.hpp"

#include <algorithm>
#include <stdexcept>

namespace bmschain::ledger {

namespace {

const Amount &max_amount() {
  static const Amount max = std::numeric_limits<Amount>::max();
  return max;
}

Json block_header_json(const Block &block) {
  return {{"height", decimal(block.height)},
          {"merkle_root", block.merkle_root.to_prefixed_hex()},
          {"prev_hash", block.prev_hash.to_prefixed_hex()},
          {"sealer", to_prefixed_hex(block.sealer)},
          {"timestamp", decimal(block.timestamp)}};
}

Json tx_unsigned_json(const Transaction &tx) {
  return {{"from", tx.from.to_string()},
          {"gas_limit", to_decimal(tx.gas_limit)},
          {"gas_price", to_decimal(tx.gas_price)},
          {"nonce", decimal(tx.nonce)},
          {"public_key", to_prefixed_hex(tx.public_key)},
          {"to", tx.to.to_string()},
          {"value", to_decimal(tx.value)}};
}

std::vector<Digest> recomputed_tx_hashes(const Block &block) {
  std::vector<Digest> hashes;
  hashes.reserve(block.transactions.size());
  for (const auto &tx : block.transactions) hashes.push_back(compute_tx_hash(tx));
  return hashes;
}

}  // namespace

std::string to_decimal(const Amount &value) { return value.str(); }

Amount parse_amount(std::string_view text) {
  if (text.empty()) throw DecodeError("empty amount");
  if (text.size() > 1 && text[0] == '0') throw DecodeError("leading zero in amount");
  if (text.size() > 78) throw DecodeError("amount exceeds 256 bits");
  if (!std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw DecodeError("amount must be a decimal string");
  }
  boost::multiprecision::cpp_int wide(std::string{text});
  if (wide > boost::multiprecision::cpp_int(max_amount())) {
    throw DecodeError("amount exceeds 256 bits");
  }
  return Amount(wide);
}

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidKey: return "InvalidKey";
    case Errc::BadSignature: return "BadSignature";
    case Errc::NonceMismatch: return "NonceMismatch";
    case Errc::InsufficientBalance: return "InsufficientBalance";
    case Errc::TxHashMismatch: return "TxHashMismatch";
    case Errc::BlockHashMismatch: return "BlockHashMismatch";
    case Errc::BrokenLink: return "BrokenLink";
    case Errc::MerkleRootMismatch: return "MerkleRootMismatch";
    case Errc::BadSealerSignature: return "BadSealerSignature";
    case Errc::UnauthorizedSealer: return "UnauthorizedSealer";
    case Errc::BadGenesis: return "BadGenesis";
    case Errc::Malformed: return "Malformed";
  }
  return "Unknown";
}

SealRejected::SealRejected(std::size_t index, Errc cause, const std::string &message)
    : Error("SealRejected",
            "transaction " + std::to_string(index) + ": " + std::string(to_string(cause)) + ": " + message),
      index_(index),
      cause_(cause) {}

ChainError::ChainError(std::uint64_t height, Errc cause, const std::string &message)
    : Error(std::string(to_string(cause)), "block " + std::to_string(height) + ": " + message),
      height_(height),
      cause_(cause) {}

std::string Address::to_string() const { return to_prefixed_hex(bytes_); }

bool Address::is_valid(std::string_view text) {
  if (text.size() != 2 + 2 * kSize || text.substr(0, 2) != "0x") return false;
  return std::all_of(text.begin() + 2, text.end(),
                     [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

Address Address::parse(std::string_view text) {
  if (!is_valid(text)) {
    throw DecodeError("invalid address '" + std::string(text) + "'");
  }
  auto raw = from_prefixed_hex(text);
  std::array<std::uint8_t, kSize> bytes{};
  std::copy(raw.begin(), raw.end(), bytes.begin());
  return Address(bytes);
}

Address derive_address(ByteView public_key) {
  if (!is_valid_ed25519_public_key(public_key)) {
    throw LedgerError(Errc::InvalidKey, "not a valid ed25519 public key");
  }
  auto digest = sha256(public_key);
  std::array<std::uint8_t, Address::kSize> bytes{};
  std::copy(digest.bytes.end() - Address::kSize, digest.bytes.end(), bytes.begin());
  return Address(bytes);
}

std::string tx_signing_payload(const Transaction &tx) { return canonical_dump(tx_unsigned_json(tx)); }

std::string tx_hash_payload(const Transaction &tx) {
  Json j = tx_unsigned_json(tx);
  j["signature"] = to_prefixed_hex(tx.signature);
  return canonical_dump(j);
}

Digest compute_tx_hash(const Transaction &tx) { return sha256(tx_hash_payload(tx)); }

Json to_json(const Transaction &tx) {
  Json j = tx_unsigned_json(tx);
  j["signature"] = to_prefixed_hex(tx.signature);
  j["tx_hash"] = tx.tx_hash.to_prefixed_hex();
  return j;
}

Transaction transaction_from_json(const Json &j) {
  Transaction tx;
  tx.from = Address::parse(string_field(j, "from"));
  tx.to = Address::parse(string_field(j, "to"));
  tx.value = parse_amount(string_field(j, "value"));
  tx.nonce = parse_u64(string_field(j, "nonce"));
  tx.gas_limit = parse_amount(string_field(j, "gas_limit"));
  tx.gas_price = parse_amount(string_field(j, "gas_price"));
  tx.public_key = from_prefixed_hex(string_field(j, "public_key"));
  tx.signature = from_prefixed_hex(string_field(j, "signature"));
  tx.tx_hash = Digest::from_prefixed_hex(string_field(j, "tx_hash"));
  return tx;
}

Transaction build_and_sign_tx(const Signer &sender, const Address &to, const Amount &value,
                              std::uint64_t nonce, const TxOptions &options) {
  Transaction tx;
  tx.public_key = sender.public_key();
  tx.from = derive_address(tx.public_key);
  tx.to = to;
  tx.value = value;
  tx.nonce = nonce;
  tx.gas_limit = options.gas_limit;
  tx.gas_price = options.gas_price;
  tx.signature = sender.sign(as_bytes(tx_signing_payload(tx)));
  tx.tx_hash = compute_tx_hash(tx);
  return tx;
}

Amount GenesisConfig::total() const {
  Amount sum = 0;
  for (const auto &[_, balance] : allocations) sum += balance;
  return sum;
}

Json GenesisConfig::to_json() const {
  Json j = Json::object();
  for (const auto &[address, balance] : allocations) j[address.to_string()] = to_decimal(balance);
  return j;
}

GenesisConfig GenesisConfig::from_json(const Json &j) {
  if (!j.is_object()) throw LedgerError(Errc::BadGenesis, "genesis config must be a JSON object");
  GenesisConfig config;
  try {
    for (const auto &[key, value] : j.items()) {
      if (!value.is_string()) throw DecodeError("balance for " + key + " must be a string");
      config.allocations[Address::parse(key)] = parse_amount(value.get<std::string>());
    }
    (void)config.total();
  } catch (const DecodeError &e) {
    throw LedgerError(Errc::BadGenesis, e.what());
  } catch (const std::overflow_error &) {
    throw LedgerError(Errc::BadGenesis, "total genesis allocation exceeds 2^256-1");
  }
  return config;
}

GenesisConfig GenesisConfig::load(const std::filesystem::path &path) {
  if (!std::filesystem::exists(path)) {
    throw LedgerError(Errc::BadGenesis, "genesis file not found: " + path.string());
  }
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception &e) {
    throw LedgerError(Errc::BadGenesis, path.string() + ": " + e.what());
  }
  return from_json(j);
}

void GenesisConfig::save(const std::filesystem::path &path) const {
  write_file_atomic(path, canonical_dump(to_json()) + "\n");
}

Account ChainState::account(const Address &address) const {
  auto it = accounts.find(address);
  if (it != accounts.end()) return it->second;
  return Account{address, 0, 0};
}

Amount ChainState::total_balance() const {
  Amount sum = 0;
  for (const auto &[_, acct] : accounts) sum += acct.balance;
  return sum;
}

std::string ChainState::accounts_encoding() const {
  Json j = Json::object();
  for (const auto &[address, acct] : accounts) {
    j[address.to_string()] = {{"balance", to_decimal(acct.balance)}, {"nonce", decimal(acct.nonce)}};
  }
  return canonical_dump(j);
}

void verify_tx(const Transaction &tx, const ChainState &state) {
  if (!is_valid_ed25519_public_key(tx.public_key) || derive_address(tx.public_key) != tx.from) {
    throw LedgerError(Errc::BadSignature, "public key does not match sender address");
  }
  if (!verify_ed25519(tx.public_key, as_bytes(tx_signing_payload(tx)), tx.signature)) {
    throw LedgerError(Errc::BadSignature, "signature does not verify");
  }
  if (compute_tx_hash(tx) != tx.tx_hash) {
    throw LedgerError(Errc::TxHashMismatch, "stored tx_hash differs from recomputed hash");
  }
  const Account sender = state.account(tx.from);
  if (tx.nonce != sender.nonce) {
    throw LedgerError(Errc::NonceMismatch,
                      "expected nonce " + decimal(sender.nonce) + ", got " + decimal(tx.nonce));
  }
  Amount required;
  try {
    required = tx.value + tx.fee();
  } catch (const std::overflow_error &) {
    throw LedgerError(Errc::InsufficientBalance, "value plus fee exceeds 2^256-1");
  }
  if (sender.balance < required) {
    throw LedgerError(Errc::InsufficientBalance,
                      "balance " + to_decimal(sender.balance) + " < required " + to_decimal(required));
  }
}

void apply_tx_in_place(const Transaction &tx, ChainState &state) {
  verify_tx(tx, state);
  const Amount fee = tx.fee();
  // All arithmetic below is bounded by the conserved total supply.
  auto &sender = state.accounts.try_emplace(tx.from, Account{tx.from, 0, 0}).first->second;
  sender.balance -= tx.value + fee;
  sender.nonce += 1;
  auto &receiver = state.accounts.try_emplace(tx.to, Account{tx.to, 0, 0}).first->second;
  receiver.balance += tx.value;
  if (fee != 0) {
    auto &sealer = state.accounts.try_emplace(state.sealer, Account{state.sealer, 0, 0}).first->second;
    sealer.balance += fee;
  }
}

ChainState apply_tx(const Transaction &tx, const ChainState &state) {
  ChainState next = state;
  apply_tx_in_place(tx, next);
  return next;
}

Digest merkle_root(std::span<const Digest> tx_hashes) {
  if (tx_hashes.empty()) return sha256(std::string_view{});
  std::vector<Digest> layer(tx_hashes.begin(), tx_hashes.end());
  while (layer.size() > 1) {
    if (layer.size() % 2 == 1) layer.push_back(layer.back());
    std::vector<Digest> next;
    next.reserve(layer.size() / 2);
    std::array<std::uint8_t, 2 * Digest::kSize> buf{};
    for (std::size_t i = 0; i < layer.size(); i += 2) {
      std::copy(layer[i].bytes.begin(), layer[i].bytes.end(), buf.begin());
      std::copy(layer[i + 1].bytes.begin(), layer[i + 1].bytes.end(), buf.begin() + Digest::kSize);
      next.push_back(sha256(buf));
    }
    layer = std::move(next);
  }
  return layer.front();
}

std::string block_signing_payload(const Block &block) { return canonical_dump(block_header_json(block)); }

Digest compute_block_hash(const Block &block) {
  Json j = block_header_json(block);
  j["sealer_signature"] = to_prefixed_hex(block.sealer_signature);
  return sha256(canonical_dump(j));
}

Json to_json(const Block &block) {
  Json j = block_header_json(block);
  j["sealer_signature"] = to_prefixed_hex(block.sealer_signature);
  j["block_hash"] = block.block_hash.to_prefixed_hex();
  Json txs = Json::array();
  for (const auto &tx : block.transactions) txs.push_back(to_json(tx));
  j["transactions"] = std::move(txs);
  return j;
}

Block block_from_json(const Json &j) {
  Block block;
  block.height = parse_u64(string_field(j, "height"));
  block.prev_hash = Digest::from_prefixed_hex(string_field(j, "prev_hash"));
  block.merkle_root = Digest::from_prefixed_hex(string_field(j, "merkle_root"));
  block.timestamp = parse_u64(string_field(j, "timestamp"));
  block.sealer = from_prefixed_hex(string_field(j, "sealer"));
  block.sealer_signature = from_prefixed_hex(string_field(j, "sealer_signature"));
  block.block_hash = Digest::from_prefixed_hex(string_field(j, "block_hash"));
  const Json &txs = field(j, "transactions");
  if (!txs.is_array()) throw DecodeError("transactions must be an array");
  for (const auto &t : txs) block.transactions.push_back(transaction_from_json(t));
  return block;
}

std::string encode_block(const Block &block) { return canonical_dump(to_json(block)); }

Block decode_block(std::string_view line) {
  Block block = block_from_json(parse_canonical(line));
  if (encode_block(block) != line) throw DecodeError("block encoding is not canonical");
  return block;
}

Block make_genesis_block(const Signer &sealer) {
  Block genesis;
  genesis.height = 0;
  genesis.timestamp = 0;
  genesis.sealer = sealer.public_key();
  genesis.merkle_root = merkle_root({});
  genesis.sealer_signature = sealer.sign(as_bytes(block_signing_payload(genesis)));
  genesis.block_hash = compute_block_hash(genesis);
  return genesis;
}

ChainState genesis_state(const GenesisConfig &config, const Block &genesis) {
  ChainState state;
  state.genesis = config;
  state.sealer = derive_address(genesis.sealer);
  for (const auto &[address, balance] : config.allocations) {
    state.accounts.emplace(address, Account{address, balance, 0});
  }
  state.head = ChainHead{genesis.block_hash, genesis.height};
  return state;
}

SealResult seal_block(std::span<const Transaction> pending, const ChainState &state, const Signer &sealer,
                      std::uint64_t timestamp) {
  if (derive_address(sealer.public_key()) != state.sealer) {
    throw LedgerError(Errc::UnauthorizedSealer, "signer is not the chain's sealing authority");
  }
  SealResult result{Block{}, state};
  for (std::size_t i = 0; i < pending.size(); ++i) {
    try {
      apply_tx_in_place(pending[i], result.state);
    } catch (const LedgerError &e) {
      throw SealRejected(i, e.code(), e.what());
    }
  }
  Block &block = result.block;
  block.height = state.head.height + 1;
  block.prev_hash = state.head.block_hash;
  block.timestamp = timestamp;
  block.sealer = sealer.public_key();
  block.transactions.assign(pending.begin(), pending.end());
  block.merkle_root = merkle_root(recomputed_tx_hashes(block));
  block.sealer_signature = sealer.sign(as_bytes(block_signing_payload(block)));
  block.block_hash = compute_block_hash(block);
  result.state.head = ChainHead{block.block_hash, block.height};
  return result;
}

ChainState verify_chain(std::span<const Block> blocks, const GenesisConfig &genesis,
                        std::optional<Address> authority) {
  if (blocks.empty()) throw ChainError(0, Errc::BadGenesis, "chain has no genesis block");
  const Block &first = blocks.front();
  if (compute_block_hash(first) != first.block_hash) {
    throw ChainError(0, Errc::BlockHashMismatch, "genesis block hash mismatch");
  }
  if (first.height != 0 || !first.prev_hash.is_zero() || first.timestamp != 0 ||
      !first.transactions.empty() || first.merkle_root != merkle_root({})) {
    throw ChainError(0, Errc::BadGenesis, "genesis block has unexpected header fields");
  }
  if (!is_valid_ed25519_public_key(first.sealer)) {
    throw ChainError(0, Errc::BadSealerSignature, "genesis sealer key is invalid");
  }
  const Address sealer_address = derive_address(first.sealer);
  if (authority && *authority != sealer_address) {
    throw ChainError(
        0, Errc::UnauthorizedSealer,
        "genesis sealed by " + sealer_address.to_string() + ", expected " + authority->to_string());
  }
  if (!verify_ed25519(first.sealer, as_bytes(block_signing_payload(first)), first.sealer_signature)) {
    throw ChainError(0, Errc::BadSealerSignature, "genesis sealer signature does not verify");
  }

  ChainState state = genesis_state(genesis, first);
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    const Block &block = blocks[i];
    const std::uint64_t height = i;
    if (compute_block_hash(block) != block.block_hash) {
      throw ChainError(height, Errc::BlockHashMismatch, "stored block_hash differs from recomputed");
    }
    if (block.height != state.head.height + 1 || block.prev_hash != state.head.block_hash) {
      throw ChainError(height, Errc::BrokenLink, "block does not extend the previous head");
    }
    if (merkle_root(recomputed_tx_hashes(block)) != block.merkle_root) {
      throw ChainError(height, Errc::MerkleRootMismatch, "merkle root does not match transactions");
    }
    if (block.sealer != first.sealer) {
      throw ChainError(height, Errc::UnauthorizedSealer, "block sealed by a different key");
    }
    if (!verify_ed25519(block.sealer, as_bytes(block_signing_payload(block)), block.sealer_signature)) {
      throw ChainError(height, Errc::BadSealerSignature, "sealer signature does not verify");
    }
    for (std::size_t t = 0; t < block.transactions.size(); ++t) {
      try {
        apply_tx_in_place(block.transactions[t], state);
      } catch (const LedgerError &e) {
        throw ChainError(height, e.code(), "transaction " + std::to_string(t) + ": " + e.what());
      }
    }
    state.head = ChainHead{block.block_hash, block.height};
  }
  return state;
}

std::vector<TxRow> query_transactions(std::span<const Block> blocks, const TxFilter &filter) {
  std::vector<TxRow> rows;
  for (const auto &block : blocks) {
    if (filter.min_height && block.height < *filter.min_height) continue;
    if (filter.max_height && block.height > *filter.max_height) continue;
    for (const auto &tx : block.transactions) {
      if (filter.from && tx.from != *filter.from) continue;
      if (filter.to && tx.to != *filter.to) continue;
      rows.push_back(TxRow{tx.tx_hash, block.height, tx.from, tx.to, tx.value});
    }
  }
  return rows;
}

}  // namespace bmschain::ledger
