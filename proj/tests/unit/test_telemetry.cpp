#include <doctest.h>

#include <map>
#include <random>
#include <sstream>

#include "bmschain/telemetry.hpp"
#include "support.hpp"

using namespace bmschain;
using namespace bmschain::telemetry;
using ledger::parse_amount;

namespace {

const std::vector<std::string> kOfficeReadings = {
    "22.9", "22.8", "22.7", "22.6", "22.6", "22.6", "22.6", "22.6", "22.8", "23.2", "23.5", "24.1",
    "24.0", "24.3", "23.8", "23.8", "23.6", "23.8", "24.0", "23.8", "23.4", "23.3", "23.2", "23.1"};

// Decimal-string oracle: t * 10^18 by moving the decimal point.
std::string scale_by_string(const std::string &t) {
  auto dot = t.find('.');
  std::string whole = t.substr(0, dot);
  std::string frac = dot == std::string::npos ? "" : t.substr(dot + 1);
  frac.append(18 - frac.size(), '0');
  std::string digits = whole + frac;
  auto first = digits.find_first_not_of('0');
  return first == std::string::npos ? "0" : digits.substr(first);
}

struct Pool {
  std::vector<std::shared_ptr<const Signer>> signers;
  ledger::GenesisConfig genesis;
};

Pool make_pool(std::size_t n, int seed_base = 100) {
  Pool p;
  for (std::size_t i = 0; i < n; ++i) {
    auto s = std::make_shared<Ed25519Signer>(testing::seeded_signer(seed_base + static_cast<int>(i)));
    p.genesis.allocations[ledger::derive_address(s->public_key())] =
        parse_amount("1000000000000000000000000");
    p.signers.push_back(s);
  }
  return p;
}

std::vector<SensorReading> readings_of(const std::vector<std::string> &values) {
  std::vector<SensorReading> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.push_back({"s1", "2016-06-01T10:" + std::string(i < 10 ? "0" : "") + std::to_string(i) + ":00",
                   Temperature::parse(values[i])});
  }
  return out;
}

}  // namespace

TEST_CASE("Temperature parsing is exact") {
  CHECK(Temperature::parse("22.9").millis() == 22900);
  CHECK(Temperature::parse("-5").millis() == -5000);
  CHECK(Temperature::parse("0.125").millis() == 125);
  CHECK(Temperature::parse("22.9").to_string() == "22.9");
  CHECK(Temperature::parse("24.0").to_string() == "24.0");
  CHECK(Temperature::parse("0").to_string() == "0.0");
  CHECK(Temperature::parse("-273.15").to_string() == "-273.15");
  for (auto bad : {"abc", "", "1.2345", "1.", ".5", "+3", "1e3", "2 3", "--1"}) {
    CHECK_THROWS_AS(Temperature::parse(bad), TelemetryError);
  }
}

TEST_CASE("encode_reading") {
  CHECK(encode_reading(Temperature::parse("22.9")) == parse_amount("22900000000000000000"));
  CHECK(encode_reading(Temperature::parse("0")) == 0);
  try {
    encode_reading(Temperature::parse("-5.0"));
    FAIL("negative reading encoded");
  } catch (const TelemetryError &e) {
    CHECK(e.code() == Errc::NegativeValue);
  }
  EncodingPolicy cold{Temperature::parse("1000")};
  CHECK(encode_reading(Temperature::parse("-5.0"), cold) == parse_amount("995000000000000000000"));
  CHECK(decode_value(parse_amount("995000000000000000000"), cold) == Temperature::parse("-5.0"));
}

TEST_CASE("decode_value") {
  CHECK(decode_value(parse_amount("22900000000000000000")).to_string() == "22.9");
  CHECK(decode_value(0).to_string() == "0.0");
  CHECK_THROWS_AS(decode_value(parse_amount("22900000000000000001")), TelemetryError);
  CHECK(format_celsius(parse_amount("22900000000000000001")) == "22.900000000000000001");
  CHECK(format_celsius(parse_amount("22900000000000000000")) == "22.9");
  CHECK(format_celsius(0) == "0.0");
}

TEST_CASE("codec matches a decimal-string oracle and round-trips") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 10000; ++i) {
    std::int64_t tenths = static_cast<std::int64_t>(rng() % 501);  // [0.0, 50.0]
    std::string text = std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
    auto t = Temperature::parse(text);
    auto value = encode_reading(t);
    REQUIRE(ledger::to_decimal(value) == scale_by_string(text));
    REQUIRE(decode_value(value) == t);
  }
}

TEST_CASE("encode is strictly monotone") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 2000; ++i) {
    auto a = Temperature::from_millis(static_cast<std::int64_t>(rng() % 1273150) - 273150);
    auto b = Temperature::from_millis(static_cast<std::int64_t>(rng() % 1273150) - 273150);
    if (a == b) continue;
    EncodingPolicy p{Temperature::parse("273.15")};
    CHECK((a < b) == (encode_reading(a, p) < encode_reading(b, p)));
  }
}

TEST_CASE("ingest_csv") {
  SUBCASE("fixture") {
    auto readings = ingest_csv_file(testing::fixture_path("office_temperatures.csv"));
    REQUIRE(readings.size() == 24);
    CHECK(readings[0] == SensorReading{"s1", "2016-06-01T10:00:00", Temperature::parse("22.9")});
    for (std::size_t i = 0; i < 24; ++i) CHECK(readings[i].temperature.to_string() == kOfficeReadings[i]);
  }
  SUBCASE("header only") {
    std::istringstream in("sensor_id,timestamp,temperature_c\n");
    CHECK(ingest_csv(in).empty());
  }
  SUBCASE("CRLF and BOM") {
    std::istringstream in(
        "\xEF\xBB\xBFsensor_id,timestamp,temperature_c\r\ns1,2016-06-01T10:00:00Z,22.9\r\n");
    CHECK(ingest_csv(in).size() == 1);
  }
  SUBCASE("quoted fields") {
    std::istringstream in("sensor_id,timestamp,temperature_c\n\"room, 3\",2016-06-01T10:00:00,\"21.5\"\n");
    auto r = ingest_csv(in);
    REQUIRE(r.size() == 1);
    CHECK(r[0].sensor_id == "room, 3");
    CHECK(to_csv(r) == "sensor_id,timestamp,temperature_c\n\"room, 3\",2016-06-01T10:00:00,21.5\n");
  }
  SUBCASE("missing header") {
    std::istringstream empty("");
    CHECK_THROWS_AS(ingest_csv(empty), TelemetryError);
    std::istringstream wrong("s1,2016-06-01T10:00:00,22.9\n");
    try {
      ingest_csv(wrong);
      FAIL("accepted headerless input");
    } catch (const TelemetryError &e) {
      CHECK(e.code() == Errc::MissingHeader);
    }
  }
  SUBCASE("bad rows report their line") {
    auto line_of = [](const std::string &body) -> std::size_t {
      std::istringstream in("sensor_id,timestamp,temperature_c\ns1,2016-06-01T10:00:00,22.9\n" + body);
      try {
        ingest_csv(in);
      } catch (const BadRow &e) {
        return e.line();
      }
      return 0;
    };
    CHECK(line_of("s1,2016-06-01T10:10:00,abc\n") == 3);
    CHECK(line_of("s1,2016-06-01T10:10:00\n") == 3);
    CHECK(line_of("s1,yesterday,22.0\n") == 3);
    CHECK(line_of(",2016-06-01T10:10:00,22.0\n") == 3);
    CHECK(line_of("s1,2016-06-01T10:10:00,1000.5\n") == 3);
    CHECK(line_of("s1,2016-06-01T10:10:00,-273.2\n") == 3);
    CHECK(line_of("\ns1,2016-06-01T10:10:00,22.0\n") == 3);
    CHECK(line_of("s1,2016-06-01T10:10:00,22.0\ns1,2016-06-01T10:20:00,22.1234\n") == 4);
  }
}

TEST_CASE("pump without rotation") {
  auto pool = make_pool(1);
  auto sealer = testing::seeded_signer(9);
  auto bms = ledger::derive_address(testing::seeded_signer(10).public_key());
  auto ledger = ledger::Ledger::create_in_memory(pool.genesis, sealer);
  auto readings = readings_of(kOfficeReadings);
  auto txs = pump(readings, RotationPolicy::never(pool.signers), bms, ledger);
  REQUIRE(txs.size() == 24);
  for (std::size_t i = 0; i < txs.size(); ++i) {
    CHECK(txs[i].from == txs[0].from);
    CHECK(txs[i].to == bms);
    CHECK(txs[i].nonce == i);
    CHECK(decode_value(txs[i].value).to_string() == kOfficeReadings[i]);
  }
  CHECK(ledger.pending().size() == 24);
  CHECK(pump({}, RotationPolicy::never(pool.signers), bms, ledger).empty());
}

TEST_CASE("pump rotates every k transactions") {
  auto pool = make_pool(5);
  auto sealer = testing::seeded_signer(9);
  auto bms = ledger::derive_address(testing::seeded_signer(10).public_key());
  auto ledger = ledger::Ledger::create_in_memory(pool.genesis, sealer);
  auto txs = pump(readings_of(kOfficeReadings), RotationPolicy::every(8, pool.signers), bms, ledger);
  std::map<ledger::Address, int> per_sender;
  for (auto &tx : txs) ++per_sender[tx.from];
  CHECK(per_sender.size() == 3);
  for (auto &[_, n] : per_sender) CHECK(n == 8);
  CHECK(txs[7].from != txs[8].from);

  // Addresses already at their limit are skipped on the next call.
  auto more = pump(readings_of({"20.0", "20.1"}), RotationPolicy::every(8, pool.signers), bms, ledger);
  CHECK(per_sender.count(more[0].from) == 0);
}

TEST_CASE("pump rotation bound holds for random n and k") {
  std::mt19937 rng(5);
  auto sealer = testing::seeded_signer(9);
  auto bms = ledger::derive_address(testing::seeded_signer(10).public_key());
  for (int trial = 0; trial < 25; ++trial) {
    std::size_t n = rng() % 40;
    std::size_t k = 1 + rng() % 10;
    std::size_t needed = (n + k - 1) / k;
    auto pool = make_pool(needed + rng() % 2, 200 + trial * 50);
    auto ledger = ledger::Ledger::create_in_memory(pool.genesis, sealer);
    std::vector<std::string> values(n, "21.0");
    auto txs = pump(readings_of(values), RotationPolicy::every(k, pool.signers), bms, ledger);
    CHECK(txs.size() == n);
    std::map<ledger::Address, std::size_t> per_sender;
    for (auto &tx : txs) ++per_sender[tx.from];
    for (auto &[_, c] : per_sender) CHECK(c <= k);
    CHECK(per_sender.size() == needed);
  }
}

TEST_CASE("pump fails before submitting anything") {
  auto pool = make_pool(2);
  auto sealer = testing::seeded_signer(9);
  auto bms = ledger::derive_address(testing::seeded_signer(10).public_key());
  auto ledger = ledger::Ledger::create_in_memory(pool.genesis, sealer);
  try {
    pump(readings_of(kOfficeReadings), RotationPolicy::every(8, pool.signers), bms, ledger);
    FAIL("pool of 2 carried 24 readings at 8 each");
  } catch (const TelemetryError &e) {
    CHECK(e.code() == Errc::PoolExhausted);
  }
  CHECK(ledger.pending().empty());
  CHECK_THROWS_AS(pump(readings_of({"-1.0"}), RotationPolicy::never(pool.signers), bms, ledger),
                  TelemetryError);
  CHECK(ledger.pending().empty());
  CHECK_THROWS_AS(RotationPolicy::every(0, pool.signers), TelemetryError);
}

TEST_CASE("ingest, pump, seal, query, decode reproduces the readings") {
  auto pool = make_pool(3);
  auto sealer = testing::seeded_signer(9);
  auto bms = ledger::derive_address(testing::seeded_signer(10).public_key());
  auto ledger = ledger::Ledger::create_in_memory(pool.genesis, sealer);
  auto readings = ingest_csv_file(testing::fixture_path("office_temperatures.csv"));
  pump(readings, RotationPolicy::every(10, pool.signers), bms, ledger);
  ledger.seal(sealer, 1464775200);
  ledger::TxFilter filter;
  filter.to = bms;
  auto blocks = ledger.blocks();
  auto rows = ledger::query_transactions(blocks, filter);
  REQUIRE(rows.size() == readings.size());
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(decode_value(rows[i].value) == readings[i].temperature);
}
