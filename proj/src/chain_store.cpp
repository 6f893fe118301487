#include "bmschain/chain_store.hpp"

#include <fstream>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <sstream>

namespace bmschain::ledger {

namespace fs = std::filesystem;

namespace {

struct Lines {
  std::vector<std::string> lines;
  // The last line had no terminating newline (interrupted write or damage).
  bool truncated = false;
};

Lines read_lines(const fs::path &path) {
  Lines out;
  if (!fs::exists(path)) return out;
  std::string text = read_file(path);
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) {
      out.lines.push_back(text.substr(start));
      out.truncated = true;
      break;
    }
    out.lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

void append_line(const fs::path &path, const std::string &line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("IoError", "cannot open " + path.string() + " for append");
  out << line << '\n';
  out.flush();
  if (!out) throw Error("IoError", "append failed for " + path.string());
}

}  // namespace

std::vector<Block> load_chain_file(const fs::path &path) {
  if (!fs::exists(path)) throw ChainError(0, Errc::BadGenesis, "chain file not found: " + path.string());
  std::vector<Block> blocks;
  auto [lines, truncated] = read_lines(path);
  if (truncated) {
    throw ChainError(lines.size() - 1, Errc::Malformed, "last block line is not newline-terminated");
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      blocks.push_back(decode_block(lines[i]));
    } catch (const DecodeError &e) {
      throw ChainError(i, Errc::Malformed, e.what());
    } catch (const std::exception &e) {
      throw ChainError(i, Errc::Malformed, e.what());
    }
  }
  return blocks;
}

ChainState verify_chain_file(const fs::path &path, const GenesisConfig &genesis,
                             std::optional<Address> authority) {
  auto blocks = load_chain_file(path);
  return verify_chain(blocks, genesis, authority);
}

struct Ledger::Impl {
  std::optional<fs::path> dir;
  GenesisConfig genesis;

  mutable std::shared_mutex snapshot_mu;
  std::shared_ptr<const ChainState> sealed;
  std::vector<Block> blocks;

  std::mutex writer_mu;
  std::vector<Transaction> pending;
  ChainState projected;

  fs::path chain_path() const { return *dir / "chain.jsonl"; }
  fs::path pending_path() const { return *dir / "pending.jsonl"; }
};

Ledger::Ledger(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Ledger::Ledger(Ledger &&) noexcept = default;
Ledger &Ledger::operator=(Ledger &&) noexcept = default;
Ledger::~Ledger() = default;

Ledger Ledger::create_in_memory(const GenesisConfig &genesis, const Signer &sealer) {
  auto impl = std::make_unique<Impl>();
  impl->genesis = genesis;
  Block first = make_genesis_block(sealer);
  impl->projected = genesis_state(genesis, first);
  impl->sealed = std::make_shared<const ChainState>(impl->projected);
  impl->blocks.push_back(std::move(first));
  return Ledger(std::move(impl));
}

Ledger Ledger::create(const fs::path &dir, const GenesisConfig &genesis, const Signer &sealer) {
  fs::create_directories(dir);
  if (fs::exists(dir / "chain.jsonl")) {
    throw Error("AlreadyInitialized", "chain already exists in " + dir.string());
  }
  Ledger ledger = create_in_memory(genesis, sealer);
  ledger.impl_->dir = dir;
  genesis.save(dir / "genesis.json");
  write_file_atomic(dir / "chain.jsonl", encode_block(ledger.impl_->blocks.front()) + "\n");
  return ledger;
}

Ledger Ledger::open(const fs::path &dir, std::optional<Address> authority) {
  auto impl = std::make_unique<Impl>();
  impl->dir = dir;
  impl->genesis = GenesisConfig::load(dir / "genesis.json");
  impl->blocks = load_chain_file(impl->chain_path());
  impl->projected = verify_chain(impl->blocks, impl->genesis, authority);
  impl->sealed = std::make_shared<const ChainState>(impl->projected);

  std::set<Digest> sealed_hashes;
  for (const auto &b : impl->blocks) {
    for (const auto &tx : b.transactions) sealed_hashes.insert(tx.tx_hash);
  }
  auto pending = read_lines(impl->pending_path());
  if (pending.truncated) {
    throw LedgerError(Errc::Malformed, "pending.jsonl: last line is not newline-terminated");
  }
  for (const auto &line : pending.lines) {
    Transaction tx;
    try {
      tx = transaction_from_json(parse_canonical(line));
    } catch (const DecodeError &e) {
      throw LedgerError(Errc::Malformed, "pending.jsonl: " + std::string(e.what()));
    }
    // Left over from a seal that persisted the block but not the pending reset.
    if (sealed_hashes.count(tx.tx_hash)) continue;
    apply_tx_in_place(tx, impl->projected);
    impl->pending.push_back(std::move(tx));
  }
  return Ledger(std::move(impl));
}

std::shared_ptr<const ChainState> Ledger::state() const {
  std::shared_lock lock(impl_->snapshot_mu);
  return impl_->sealed;
}

std::vector<Block> Ledger::blocks() const {
  std::shared_lock lock(impl_->snapshot_mu);
  return impl_->blocks;
}

std::vector<Transaction> Ledger::pending() const {
  std::lock_guard lock(impl_->writer_mu);
  return impl_->pending;
}

const GenesisConfig &Ledger::genesis() const { return impl_->genesis; }

std::uint64_t Ledger::next_nonce(const Address &address) const {
  std::lock_guard lock(impl_->writer_mu);
  return impl_->projected.account(address).nonce;
}

void Ledger::submit(const Transaction &tx) {
  std::lock_guard lock(impl_->writer_mu);
  apply_tx_in_place(tx, impl_->projected);
  impl_->pending.push_back(tx);
  if (impl_->dir) append_line(impl_->pending_path(), canonical_dump(to_json(tx)));
}

void Ledger::submit_batch(std::span<const Transaction> txs) {
  std::lock_guard lock(impl_->writer_mu);
  ChainState next = impl_->projected;
  for (const auto &tx : txs) apply_tx_in_place(tx, next);
  if (impl_->dir) {
    std::string lines;
    for (const auto &tx : txs) lines += canonical_dump(to_json(tx)) + "\n";
    std::ofstream out(impl_->pending_path(), std::ios::binary | std::ios::app);
    out << lines;
    out.flush();
    if (!out) throw Error("IoError", "append failed for " + impl_->pending_path().string());
  }
  impl_->projected = std::move(next);
  impl_->pending.insert(impl_->pending.end(), txs.begin(), txs.end());
}

Block Ledger::seal(const Signer &sealer, std::uint64_t timestamp) {
  std::lock_guard lock(impl_->writer_mu);
  std::shared_ptr<const ChainState> base;
  {
    std::shared_lock snap(impl_->snapshot_mu);
    base = impl_->sealed;
  }
  SealResult result = seal_block(impl_->pending, *base, sealer, timestamp);
  if (impl_->dir) {
    append_line(impl_->chain_path(), encode_block(result.block));
    write_file_atomic(impl_->pending_path(), "");
  }
  {
    std::unique_lock snap(impl_->snapshot_mu);
    impl_->blocks.push_back(result.block);
    impl_->sealed = std::make_shared<const ChainState>(result.state);
  }
  impl_->projected = result.state;
  impl_->pending.clear();
  return result.block;
}

void Ledger::discard_pending() {
  std::lock_guard lock(impl_->writer_mu);
  impl_->pending.clear();
  impl_->projected = *state();
  if (impl_->dir) write_file_atomic(impl_->pending_path(), "");
}

}  // namespace bmschain::ledger
