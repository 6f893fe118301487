#pragma once

// Single-writer ledger handle with an optional on-disk home:
//
//   <dir>/genesis.json   flat address -> decimal balance map
//   <dir>/chain.jsonl    one canonical block per line, genesis first
//   <dir>/pending.jsonl  submitted but unsealed transactions
//
// Readers take immutable snapshots, so a reader never sees a half-applied
// block. Writers (submit, seal) serialize on an internal mutex.

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "bmschain/ledger.hpp"

namespace bmschain::ledger {

// Strict load of a chain file. A line that does not decode canonically
// throws ChainError(line index, Malformed).
std::vector<Block> load_chain_file(const std::filesystem::path &path);

// load_chain_file + verify_chain.
ChainState verify_chain_file(const std::filesystem::path &path, const GenesisConfig &genesis,
                             std::optional<Address> authority = std::nullopt);

class Ledger {
 public:
  static Ledger create_in_memory(const GenesisConfig &genesis, const Signer &sealer);
  // Refuses to overwrite an existing chain.
  static Ledger create(const std::filesystem::path &dir, const GenesisConfig &genesis, const Signer &sealer);
  // Loads and replays the whole chain; throws ChainError on any failure.
  static Ledger open(const std::filesystem::path &dir, std::optional<Address> authority = std::nullopt);

  Ledger(Ledger &&) noexcept;
  Ledger &operator=(Ledger &&) noexcept;
  ~Ledger();

  std::shared_ptr<const ChainState> state() const;
  std::vector<Block> blocks() const;
  std::vector<Transaction> pending() const;
  const GenesisConfig &genesis() const;

  // Nonce the next transaction from `address` must carry, counting pending ones.
  std::uint64_t next_nonce(const Address &address) const;

  // Verifies against sealed state plus everything already pending.
  void submit(const Transaction &tx);
  // All-or-nothing: if any transaction fails, none are added.
  void submit_batch(std::span<const Transaction> txs);
  // Seals all pending transactions into one block and persists it.
  Block seal(const Signer &sealer, std::uint64_t timestamp);
  void discard_pending();

 private:
  struct Impl;
  explicit Ledger(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace bmschain::ledger
