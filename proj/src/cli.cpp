#include "bmschain/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "bmschain/cas.hpp"
#include "bmschain/chain_store.hpp"
#include "bmschain/envelope.hpp"
#include "bmschain/exchange.hpp"

namespace bmschain::cli {

namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

std::uint16_t parse_port(const std::string &text) {
  std::uint64_t v = 0;
  try {
    v = parse_u64(text);
  } catch (const DecodeError &) {
    throw Error("InvalidConfig", "port '" + text + "' is not a number");
  }
  if (v == 0 || v > 65535) throw Error("InvalidConfig", "port " + text + " out of range");
  return static_cast<std::uint16_t>(v);
}

std::uint64_t now_seconds() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());
}

ledger::Address parse_address(const std::string &text) {
  if (!ledger::Address::is_valid(text)) {
    throw Error("InvalidAddress", "'" + text + "' is not a 0x-prefixed 40-hex-digit address");
  }
  return ledger::Address::parse(text);
}

std::vector<std::shared_ptr<const Signer>> load_pool(const fs::path &dir) {
  if (!fs::is_directory(dir))
    throw Error("PoolExhausted", "sender pool directory " + dir.string() + " not found");
  std::vector<fs::path> files;
  for (const auto &entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".key") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::shared_ptr<const Signer>> pool;
  for (const auto &f : files) {
    pool.push_back(std::make_shared<Ed25519Signer>(Ed25519Signer::load(f)));
  }
  return pool;
}

std::string explorer_field(const std::string &value, bool csv) {
  if (!csv || value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

ledger::Address sealer_address(const Config &config) {
  return ledger::derive_address(Ed25519Signer::load(config.sealer_key).public_key());
}

}  // namespace

void Config::save() const {
  Json j = {{"exchange_port", decimal(exchange_port)},
            {"gas_limit", ledger::to_decimal(gas_limit)},
            {"gas_price", ledger::to_decimal(gas_price)},
            {"offset_c", encoding.offset.to_string()},
            {"sealer_key", fs::absolute(sealer_key).lexically_normal().string()}};
  write_file_atomic(data_dir / "config.json", canonical_dump(j) + "\n");
}

Config Config::load(const fs::path &data_dir) {
  auto path = data_dir / "config.json";
  if (!fs::exists(path)) {
    throw Error("NotInitialized", "no config.json in " + data_dir.string() + " (run init first)");
  }
  Config c;
  c.data_dir = data_dir;
  try {
    Json j = Json::parse(read_file(path));
    c.sealer_key = string_field(j, "sealer_key");
    c.gas_limit = ledger::parse_amount(string_field(j, "gas_limit"));
    c.gas_price = ledger::parse_amount(string_field(j, "gas_price"));
    c.exchange_port = parse_port(string_field(j, "exchange_port"));
    c.encoding.offset = telemetry::Temperature::parse(string_field(j, "offset_c"));
  } catch (const Json::exception &e) {
    throw Error("InvalidConfig", path.string() + ": " + e.what());
  } catch (const DecodeError &e) {
    throw Error("InvalidConfig", path.string() + ": " + e.what());
  }
  if (!fs::exists(c.sealer_key)) {
    throw Error("InvalidConfig", "sealer key " + c.sealer_key.string() + " not found");
  }
  return c;
}

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Sensor-to-BMS ledger, encrypted file store and object exchange", "bmschain"};
  app.require_subcommand(1);

  std::string data_dir_flag;
  app.add_option("--data-dir", data_dir_flag,
                 std::string("Data directory (env ") + kDataDirEnv + ", default ./bmschain-data)");

  // keygen
  auto *keygen = app.add_subcommand("keygen", "Generate a signing or encryption keypair");
  std::string key_kind = "signing";
  std::string key_out;
  keygen->add_option("--kind", key_kind, "signing | encryption")
      ->check(CLI::IsMember({"signing", "encryption"}));
  keygen->add_option("--out", key_out, "Key file to write (encryption also writes <out>.pub)")->required();

  // init
  auto *init = app.add_subcommand("init", "Create a chain from a genesis allocation file");
  std::string genesis_file, sealer_key_file, offset_text = "0.0";
  std::string init_gas_limit = std::to_string(ledger::kDefaultGasLimit);
  std::string init_gas_price = std::to_string(ledger::kDefaultGasPrice);
  std::string init_port;
  init->add_option("--genesis", genesis_file, "JSON map of address -> decimal balance")->required();
  init->add_option("--sealer-key", sealer_key_file, "Signing key that seals blocks")->required();
  init->add_option("--offset-c", offset_text, "Degrees added before encoding (>= 0)");
  init->add_option("--gas-limit", init_gas_limit, "Default gas limit");
  init->add_option("--gas-price", init_gas_price, "Default gas price");
  init->add_option("--port", init_port, "Default exchange port");

  // ingest
  auto *ingest = app.add_subcommand("ingest", "Send CSV readings as transactions and seal a block");
  std::string csv_file, to_text, pool_dir;
  std::size_t rotate_every = 0;
  std::uint64_t ingest_ts = 0;
  bool no_seal = false;
  ingest->add_option("--csv", csv_file, "sensor_id,timestamp,temperature_c file")->required();
  ingest->add_option("--to", to_text, "Receiving BMS address")->required();
  ingest->add_option("--rotate-every", rotate_every, "Switch sender address every K transactions")
      ->check(CLI::PositiveNumber);
  ingest->add_option("--pool-dir", pool_dir, "Directory of sender *.key files (default <data-dir>/pool)");
  ingest->add_option("--timestamp", ingest_ts, "Block timestamp (default: now)");
  ingest->add_flag("--no-seal", no_seal, "Leave the transactions pending");

  // seal
  auto *seal = app.add_subcommand("seal", "Seal pending transactions into a block");
  std::uint64_t seal_ts = 0;
  seal->add_option("--timestamp", seal_ts, "Block timestamp (default: now)");

  // verify
  auto *verify = app.add_subcommand("verify", "Replay and verify the whole chain");

  // explorer
  auto *explorer = app.add_subcommand("explorer", "Print the transaction table");
  std::string explorer_to, explorer_from, explorer_format = "tsv";
  bool explorer_raw = false;
  explorer->add_option("--to", explorer_to, "Only transactions to this address");
  explorer->add_option("--from", explorer_from, "Only transactions from this address");
  explorer->add_option("--format", explorer_format, "tsv | csv")->check(CLI::IsMember({"tsv", "csv"}));
  explorer->add_flag("--raw", explorer_raw, "Print raw ledger units instead of degrees");

  // balance
  auto *balance = app.add_subcommand("balance", "Print an account balance");
  std::string balance_addr;
  balance->add_option("address", balance_addr, "Account address")->required();

  // file publish / fetch
  auto *file = app.add_subcommand("file", "Encrypted file sharing");
  file->require_subcommand(1);
  auto *publish = file->add_subcommand("publish", "Encrypt for a recipient and add to the store");
  std::string publish_in, publish_recipient;
  publish->add_option("--in", publish_in, "Plaintext file")->required();
  publish->add_option("--recipient", publish_recipient, "Recipient public key file")->required();
  auto *fetch = file->add_subcommand("fetch", "Fetch by root hash, reassemble and decrypt");
  std::string fetch_root, fetch_from, fetch_identity, fetch_out;
  fetch->add_option("--root", fetch_root, "Root object hash")->required();
  fetch->add_option("--from", fetch_from, "Peer host:port")->required();
  fetch->add_option("--identity", fetch_identity, "Private identity file")->required();
  fetch->add_option("--out", fetch_out, "Where to write the plaintext")->required();

  // serve
  auto *serve = app.add_subcommand("serve", "Serve the object store until interrupted");
  std::string serve_port, serve_host = "0.0.0.0";
  serve->add_option("--port", serve_port, std::string("Listen port (env ") + kPortEnv + ")");
  serve->add_option("--host", serve_host, "Listen address");

  std::vector<std::string> argv_storage{"bmschain"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char *> argv;
  for (auto &a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  fs::path data_dir = "bmschain-data";
  if (const char *env = std::getenv(kDataDirEnv); env && *env) data_dir = env;
  if (!data_dir_flag.empty()) data_dir = data_dir_flag;

  try {
    if (*keygen) {
      if (key_kind == "signing") {
        auto signer = Ed25519Signer::generate();
        signer.save(key_out);
        out << ledger::derive_address(signer.public_key()).to_string() << "\n";
      } else {
        auto identity = envelope::Identity::generate();
        identity.save(key_out);
        identity.save_public(key_out + ".pub");
        out << identity.fingerprint() << "\n";
      }
      return kExitOk;
    }

    if (*init) {
      if (!fs::exists(genesis_file)) {
        throw Error("BadGenesis", "genesis file " + genesis_file + " not found");
      }
      if (fs::exists(data_dir / "config.json")) {
        throw Error("AlreadyInitialized", data_dir.string() + " already holds a chain");
      }
      Config config;
      config.data_dir = data_dir;
      config.sealer_key = fs::absolute(sealer_key_file);
      try {
        config.gas_limit = ledger::parse_amount(init_gas_limit);
        config.gas_price = ledger::parse_amount(init_gas_price);
        config.encoding.offset = telemetry::Temperature::parse(offset_text);
      } catch (const DecodeError &e) {
        throw Error("InvalidConfig", e.what());
      }
      if (config.encoding.offset.millis() < 0) throw Error("InvalidConfig", "--offset-c must be >= 0");
      if (!init_port.empty()) config.exchange_port = parse_port(init_port);
      auto genesis = ledger::GenesisConfig::load(genesis_file);
      auto sealer = Ed25519Signer::load(sealer_key_file);
      auto ledger = ledger::Ledger::create(config.chain_dir(), genesis, sealer);
      fs::create_directories(config.pool_dir());
      config.save();
      out << "genesis " << ledger.blocks().front().block_hash.to_prefixed_hex() << "\n";
      return kExitOk;
    }

    if (*serve) {
      std::uint16_t port = exchange::kDefaultPort;
      if (fs::exists(data_dir / "config.json")) port = Config::load(data_dir).exchange_port;
      if (const char *env = std::getenv(kPortEnv); env && *env) port = parse_port(env);
      if (!serve_port.empty()) port = parse_port(serve_port);
      cas::ObjectStore store(data_dir / "store");
      auto server = exchange::serve(store, exchange::PeerEndpoint{serve_host, port});
      g_interrupted.store(false);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      out << "serving " << store.root().string() << " on " << serve_host << ":" << server->port()
          << std::endl;
      while (!g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server->stop();
      return kExitOk;
    }

    if (*file && *fetch) {
      auto root = cas::ObjectHash::parse(fetch_root);
      auto identity = envelope::Identity::load(fetch_identity);
      cas::ObjectStore store(data_dir / "store");
      std::size_t transferred = exchange::fetch_dag(exchange::PeerEndpoint::parse(fetch_from), root, store);
      Bytes sealed = cas::cat_file(store, root);
      Bytes plain = envelope::decrypt(sealed, identity);
      write_file_atomic(fetch_out, as_chars(plain));
      out << "fetched " << transferred << " nodes, wrote " << plain.size() << " bytes to " << fetch_out
          << "\n";
      return kExitOk;
    }

    if (*file && *publish) {
      Bytes pk = envelope::load_public_key(publish_recipient);
      std::string plain = read_file(publish_in);
      Bytes sealed = envelope::encrypt_for(pk, as_bytes(plain));
      cas::ObjectStore store(data_dir / "store");
      auto root = cas::add_file(store, sealed);
      out << root.to_string() << "\n";
      return kExitOk;
    }

    // Everything below needs an initialised chain.
    Config config = Config::load(data_dir);
    const auto authority = sealer_address(config);

    if (*verify) {
      auto genesis = ledger::GenesisConfig::load(config.genesis_path());
      auto state = ledger::verify_chain_file(config.chain_dir() / "chain.jsonl", genesis, authority);
      out << "ok height " << state.head.height << " head " << state.head.block_hash.to_prefixed_hex() << "\n";
      return kExitOk;
    }

    auto chain = ledger::Ledger::open(config.chain_dir(), authority);

    if (*ingest) {
      auto receiver = parse_address(to_text);
      auto readings = telemetry::ingest_csv_file(csv_file);
      auto pool = load_pool(pool_dir.empty() ? config.pool_dir() : fs::path(pool_dir));
      auto rotation = rotate_every > 0 ? telemetry::RotationPolicy::every(rotate_every, std::move(pool))
                                       : telemetry::RotationPolicy::never(std::move(pool));
      auto txs = telemetry::pump(readings, rotation, receiver, chain, config.encoding,
                                 ledger::TxOptions{config.gas_limit, config.gas_price});
      if (no_seal) {
        out << "pending " << chain.pending().size() << " txs\n";
        return kExitOk;
      }
      auto block = chain.seal(Ed25519Signer::load(config.sealer_key),
                              ingest->count("--timestamp") ? ingest_ts : now_seconds());
      out << "block " << block.height << " txs " << block.transactions.size() << "\n";
      return kExitOk;
    }

    if (*seal) {
      auto block = chain.seal(Ed25519Signer::load(config.sealer_key),
                              seal->count("--timestamp") ? seal_ts : now_seconds());
      out << "block " << block.height << " txs " << block.transactions.size() << "\n";
      return kExitOk;
    }

    if (*explorer) {
      ledger::TxFilter filter;
      if (!explorer_to.empty()) filter.to = parse_address(explorer_to);
      if (!explorer_from.empty()) filter.from = parse_address(explorer_from);
      const bool csv = explorer_format == "csv";
      const char sep = csv ? ',' : '\t';
      auto blocks = chain.blocks();
      out << "Tx Hash" << sep << "Block" << sep << "From" << sep << "To" << sep << "Value" << "\n";
      for (const auto &row : ledger::query_transactions(blocks, filter)) {
        std::string value = explorer_raw ? ledger::to_decimal(row.value)
                                         : telemetry::format_celsius(row.value, config.encoding);
        out << row.tx_hash.to_prefixed_hex() << sep << row.height << sep << row.from.to_string() << sep
            << row.to.to_string() << sep << explorer_field(value, csv) << "\n";
      }
      return kExitOk;
    }

    if (*balance) {
      auto address = parse_address(balance_addr);
      out << ledger::to_decimal(chain.state()->account(address).balance) << "\n";
      return kExitOk;
    }
  } catch (const Error &e) {
    err << "error: " << e.category() << ": " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception &e) {
    err << "error: Internal: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace bmschain::cli
