#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bmschain/ledger.hpp"
#include "bmschain/telemetry.hpp"

namespace bmschain::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char *kDataDirEnv = "BMSCHAIN_DATA_DIR";
inline constexpr const char *kPortEnv = "BMSCHAIN_PORT";

// <data-dir>/config.json, written by `init`.
struct Config {
  std::filesystem::path data_dir;
  std::filesystem::path sealer_key;
  ledger::Amount gas_limit = ledger::kDefaultGasLimit;
  ledger::Amount gas_price = ledger::kDefaultGasPrice;
  std::uint16_t exchange_port = 4737;
  telemetry::EncodingPolicy encoding;

  std::filesystem::path chain_dir() const { return data_dir / "chain"; }
  std::filesystem::path store_dir() const { return data_dir / "store"; }
  std::filesystem::path pool_dir() const { return data_dir / "pool"; }
  std::filesystem::path genesis_path() const { return chain_dir() / "genesis.json"; }

  void save() const;
  // Throws Error("NotInitialized") if the data directory has no config.
  static Config load(const std::filesystem::path &data_dir);
};

// Runs one command line (args excludes the program name). Errors are
// reported on `err` as "error: <Category>: <message>".
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace bmschain::cli
