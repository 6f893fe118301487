#pragma once

// Temperature readings as ledger values.
//
// A reading of t degrees Celsius travels as the transfer amount
// (t + offset) * 10^18, the same scaling as converting whole units to wei.
// Temperatures are held as integer milli-degrees so the round trip is exact.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bmschain/chain_store.hpp"
#include "bmschain/ledger.hpp"

namespace bmschain::telemetry {

using ledger::Address;
using ledger::Amount;

enum class Errc {
  NegativeValue,
  InexactValue,
  OutOfRange,
  InvalidTemperature,
  MissingHeader,
  BadRow,
  InvalidPolicy,
  PoolExhausted,
};

std::string_view to_string(Errc code);

class TelemetryError : public Error {
 public:
  TelemetryError(Errc code, const std::string &message)
      : Error(std::string(to_string(code)), message), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class BadRow : public TelemetryError {
 public:
  BadRow(std::size_t line, const std::string &reason)
      : TelemetryError(Errc::BadRow, "line " + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(reason) {}
  std::size_t line() const noexcept { return line_; }
  const std::string &reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

// Exact decimal temperature in degrees Celsius, at most 3 fractional digits.
class Temperature {
 public:
  constexpr Temperature() = default;
  static constexpr Temperature from_millis(std::int64_t millis) { return Temperature(millis); }
  // "-12", "22.9", "0.125"; anything else throws InvalidTemperature.
  static Temperature parse(std::string_view text);

  constexpr std::int64_t millis() const { return millis_; }
  // Shortest form with at least one fractional digit: "22.9", "0.0", "-5.125".
  std::string to_string() const;

  constexpr auto operator<=>(const Temperature &) const = default;

 private:
  constexpr explicit Temperature(std::int64_t millis) : millis_(millis) {}
  std::int64_t millis_ = 0;
};

inline constexpr Temperature kMinTemperature = Temperature::from_millis(-273150);
inline constexpr Temperature kMaxTemperature = Temperature::from_millis(1000000);

struct EncodingPolicy {
  // Ledger units per degree; fixed.
  static const Amount &scale();
  // Added before scaling; must be >= 0.
  Temperature offset{};
};

Amount encode_reading(Temperature t, const EncodingPolicy &policy = {});
// Inverse of encode_reading. Throws InexactValue if `value` is not a whole
// number of milli-degrees, OutOfRange if it does not fit a Temperature.
Temperature decode_value(const Amount &value, const EncodingPolicy &policy = {});
// Exact decimal rendering of any value, e.g. for explorer output.
std::string format_celsius(const Amount &value, const EncodingPolicy &policy = {});

struct SensorReading {
  std::string sensor_id;
  std::string timestamp;  // ISO-8601
  Temperature temperature;

  bool operator==(const SensorReading &) const = default;
};

inline constexpr std::string_view kCsvHeader = "sensor_id,timestamp,temperature_c";

// Header required; any malformed row fails the whole ingest with its line number.
std::vector<SensorReading> ingest_csv(std::istream &in);
std::vector<SensorReading> ingest_csv_file(const std::filesystem::path &path);
std::string to_csv(std::span<const SensorReading> readings);

struct RotationPolicy {
  // Empty = never rotate.
  std::optional<std::size_t> rotate_every;
  // Pre-funded sender wallets, used in order.
  std::vector<std::shared_ptr<const Signer>> pool;

  static RotationPolicy never(std::vector<std::shared_ptr<const Signer>> pool);
  static RotationPolicy every(std::size_t k, std::vector<std::shared_ptr<const Signer>> pool);
};

// One transaction per reading, in order, submitted to `ledger` as a single
// all-or-nothing batch. Under rotation k, an address signs at most k
// transactions over its lifetime on the ledger, then the next pool entry
// takes over.
std::vector<ledger::Transaction> pump(std::span<const SensorReading> readings, const RotationPolicy &rotation,
                                      const Address &receiver, ledger::Ledger &ledger,
                                      const EncodingPolicy &encoding = {},
                                      const ledger::TxOptions &options = {});

}  // namespace bmschain::telemetry
