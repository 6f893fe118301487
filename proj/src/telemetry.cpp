#include "bmschain/telemetry.hpp"

#include <fstream>
#include <limits>
#include <map>
#include <regex>
#include <sstream>

namespace bmschain::telemetry {

namespace {

using boost::multiprecision::cpp_int;

// Ledger units per milli-degree.
const cpp_int &units_per_milli() {
  static const cpp_int v = cpp_int(1000000000000000ULL);  // 10^15
  return v;
}

std::string format_scaled(cpp_int value, unsigned fraction_digits) {
  bool negative = value < 0;
  if (negative) value = -value;
  cpp_int denom = 1;
  for (unsigned i = 0; i < fraction_digits; ++i) denom *= 10;
  cpp_int whole = value / denom;
  std::string frac = cpp_int(value % denom).str();
  frac.insert(0, fraction_digits - frac.size(), '0');
  while (frac.size() > 1 && frac.back() == '0') frac.pop_back();
  return (negative ? "-" : "") + whole.str() + "." + frac;
}

// Splits one CSV record; double-quoted fields may contain commas and "".
std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      if (!current.empty() || was_quoted) throw BadRow(line_no, "unexpected quote");
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
      was_quoted = false;
    } else {
      if (was_quoted) throw BadRow(line_no, "text after closing quote");
      current.push_back(c);
    }
  }
  if (quoted) throw BadRow(line_no, "unterminated quoted field");
  fields.push_back(std::move(current));
  return fields;
}

bool is_iso8601(const std::string &text) {
  static const std::regex pattern(
      R"(\d{4}-(0[1-9]|1[0-2])-(0[1-9]|[12]\d|3[01])T([01]\d|2[0-3]):[0-5]\d(:[0-5]\d(\.\d+)?)?(Z|[+-]([01]\d|2[0-3]):[0-5]\d)?)");
  return std::regex_match(text, pattern);
}

std::string csv_field(const std::string &value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::NegativeValue: return "NegativeValue";
    case Errc::InexactValue: return "InexactValue";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::InvalidTemperature: return "InvalidTemperature";
    case Errc::MissingHeader: return "MissingHeader";
    case Errc::BadRow: return "BadRow";
    case Errc::InvalidPolicy: return "InvalidPolicy";
    case Errc::PoolExhausted: return "PoolExhausted";
  }
  return "Unknown";
}

Temperature Temperature::parse(std::string_view text) {
  auto fail = [&](const char *why) {
    return TelemetryError(Errc::InvalidTemperature,
                          "'" + std::string(text) + "' is not a temperature: " + why);
  };
  std::size_t i = 0;
  bool negative = false;
  if (i < text.size() && text[i] == '-') {
    negative = true;
    ++i;
  }
  std::int64_t whole = 0;
  std::size_t whole_digits = 0;
  for (; i < text.size() && text[i] >= '0' && text[i] <= '9'; ++i, ++whole_digits) {
    if (whole_digits >= 12) throw fail("too many digits");
    whole = whole * 10 + (text[i] - '0');
  }
  if (whole_digits == 0) throw fail("expected digits");
  std::int64_t frac = 0;
  if (i < text.size() && text[i] == '.') {
    ++i;
    std::size_t frac_digits = 0;
    for (; i < text.size() && text[i] >= '0' && text[i] <= '9'; ++i, ++frac_digits) {
      if (frac_digits >= 3) throw fail("more than 3 fractional digits");
      frac = frac * 10 + (text[i] - '0');
    }
    if (frac_digits == 0) throw fail("expected digits after '.'");
    for (; frac_digits < 3; ++frac_digits) frac *= 10;
  }
  if (i != text.size()) throw fail("unexpected character");
  std::int64_t millis = whole * 1000 + frac;
  return Temperature(negative ? -millis : millis);
}

std::string Temperature::to_string() const { return format_scaled(cpp_int(millis_), 3); }

const Amount &EncodingPolicy::scale() {
  static const Amount s = Amount(1000000000000000000ULL);  // 10^18
  return s;
}

Amount encode_reading(Temperature t, const EncodingPolicy &policy) {
  if (policy.offset.millis() < 0) {
    throw TelemetryError(Errc::InvalidPolicy, "offset must be non-negative");
  }
  cpp_int millis = cpp_int(t.millis()) + policy.offset.millis();
  if (millis < 0) {
    throw TelemetryError(Errc::NegativeValue, t.to_string() + " C + offset " + policy.offset.to_string() +
                                                  " is below zero and cannot be a transfer amount");
  }
  return Amount(millis * units_per_milli());
}

Temperature decode_value(const Amount &value, const EncodingPolicy &policy) {
  cpp_int wide(value);
  if (wide % units_per_milli() != 0) {
    throw TelemetryError(Errc::InexactValue,
                         ledger::to_decimal(value) + " is not a whole number of milli-degrees");
  }
  cpp_int millis = wide / units_per_milli() - policy.offset.millis();
  if (millis > std::numeric_limits<std::int64_t>::max() ||
      millis < std::numeric_limits<std::int64_t>::min()) {
    throw TelemetryError(Errc::OutOfRange, ledger::to_decimal(value) + " is out of range");
  }
  return Temperature::from_millis(static_cast<std::int64_t>(millis));
}

std::string format_celsius(const Amount &value, const EncodingPolicy &policy) {
  cpp_int wide = cpp_int(value) - cpp_int(policy.offset.millis()) * units_per_milli();
  return format_scaled(wide, 18);
}

std::vector<SensorReading> ingest_csv(std::istream &in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw TelemetryError(Errc::MissingHeader, "input is empty");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw TelemetryError(Errc::MissingHeader,
                         "expected header '" + std::string(kCsvHeader) + "', got '" + line + "'");
  }
  std::vector<SensorReading> readings;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw BadRow(line_no, "empty row");
    auto fields = split_csv_line(line, line_no);
    if (fields.size() != 3) {
      throw BadRow(line_no, "expected 3 fields, got " + std::to_string(fields.size()));
    }
    SensorReading r;
    r.sensor_id = std::move(fields[0]);
    r.timestamp = std::move(fields[1]);
    if (r.sensor_id.empty()) throw BadRow(line_no, "empty sensor_id");
    if (!is_iso8601(r.timestamp)) throw BadRow(line_no, "timestamp '" + r.timestamp + "' is not ISO-8601");
    try {
      r.temperature = Temperature::parse(fields[2]);
    } catch (const TelemetryError &e) {
      throw BadRow(line_no, e.what());
    }
    if (r.temperature < kMinTemperature || r.temperature > kMaxTemperature) {
      throw BadRow(line_no, "temperature " + r.temperature.to_string() + " outside [-273.15, 1000.0]");
    }
    readings.push_back(std::move(r));
  }
  return readings;
}

std::vector<SensorReading> ingest_csv_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot open " + path.string());
  return ingest_csv(in);
}

std::string to_csv(std::span<const SensorReading> readings) {
  std::string out(kCsvHeader);
  out += "\n";
  for (const auto &r : readings) {
    out += csv_field(r.sensor_id) + "," + csv_field(r.timestamp) + "," + r.temperature.to_string() + "\n";
  }
  return out;
}

RotationPolicy RotationPolicy::never(std::vector<std::shared_ptr<const Signer>> pool) {
  return RotationPolicy{std::nullopt, std::move(pool)};
}

RotationPolicy RotationPolicy::every(std::size_t k, std::vector<std::shared_ptr<const Signer>> pool) {
  if (k == 0) throw TelemetryError(Errc::InvalidPolicy, "rotate_every must be positive");
  return RotationPolicy{k, std::move(pool)};
}

std::vector<ledger::Transaction> pump(std::span<const SensorReading> readings, const RotationPolicy &rotation,
                                      const Address &receiver, ledger::Ledger &ledger,
                                      const EncodingPolicy &encoding, const ledger::TxOptions &options) {
  if (readings.empty()) return {};
  if (rotation.rotate_every && *rotation.rotate_every == 0) {
    throw TelemetryError(Errc::InvalidPolicy, "rotate_every must be positive");
  }
  if (rotation.pool.empty()) throw TelemetryError(Errc::PoolExhausted, "address pool is empty");

  std::vector<Amount> values;
  values.reserve(readings.size());
  for (const auto &r : readings) values.push_back(encode_reading(r.temperature, encoding));

  // Assign a sender to every reading before signing anything.
  struct Sender {
    const Signer *signer;
    Address address;
    std::uint64_t next_nonce;
  };
  std::vector<Sender> senders;
  std::vector<std::size_t> assignment;
  assignment.reserve(readings.size());
  if (!rotation.rotate_every) {
    const auto &signer = *rotation.pool.front();
    auto address = ledger::derive_address(signer.public_key());
    senders.push_back({&signer, address, ledger.next_nonce(address)});
    assignment.assign(readings.size(), 0);
  } else {
    const std::uint64_t k = *rotation.rotate_every;
    std::size_t remaining = readings.size();
    for (const auto &signer : rotation.pool) {
      if (remaining == 0) break;
      auto address = ledger::derive_address(signer->public_key());
      std::uint64_t used = ledger.next_nonce(address);
      if (used >= k) continue;
      std::size_t take = std::min<std::uint64_t>(k - used, remaining);
      senders.push_back({signer.get(), address, used});
      assignment.insert(assignment.end(), take, senders.size() - 1);
      remaining -= take;
    }
    if (remaining != 0) {
      throw TelemetryError(Errc::PoolExhausted, "address pool cannot carry " +
                                                    std::to_string(readings.size()) + " readings at " +
                                                    std::to_string(k) + " per address (" +
                                                    std::to_string(remaining) + " left over)");
    }
  }

  std::vector<ledger::Transaction> txs;
  txs.reserve(readings.size());
  for (std::size_t i = 0; i < readings.size(); ++i) {
    Sender &s = senders[assignment[i]];
    txs.push_back(ledger::build_and_sign_tx(*s.signer, receiver, values[i], s.next_nonce++, options));
  }
  ledger.submit_batch(txs);
  return txs;
}

}  // namespace bmschain::telemetry
