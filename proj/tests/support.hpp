#pragma once

// Shared helpers for the test binaries.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "bmschain/crypto.hpp"
#include "bmschain/encoding.hpp"

namespace bmschain::testing {

class TempDir {
 public:
  explicit TempDir(const std::string &tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() / ("bmschain-" + tag + "-" + std::to_string(::getpid()) +
                                                      "-" + std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Bytes random_content(std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Bytes out(size);
  std::size_t i = 0;
  for (; i + 8 <= size; i += 8) {
    auto v = rng();
    for (int b = 0; b < 8; ++b) out[i + b] = static_cast<std::uint8_t>(v >> (8 * b));
  }
  for (; i < size; ++i) out[i] = static_cast<std::uint8_t>(rng());
  return out;
}

// Deterministic signer: seed is `fill` repeated, or 00..1f when fill < 0.
inline Ed25519Signer seeded_signer(int fill) {
  Bytes seed(32);
  for (int i = 0; i < 32; ++i) seed[i] = static_cast<std::uint8_t>(fill < 0 ? i : fill);
  return Ed25519Signer::from_seed(seed);
}

inline std::string fixture_path(const std::string &name) {
  return std::string(BMSCHAIN_FIXTURE_DIR) + "/" + name;
}

}  // namespace bmschain::testing
