#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace kf {

/// Incremental SHA-256; `hex()` finalizes and returns lowercase hex.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::byte> bytes);
  Sha256& update(std::string_view text);
  Sha256& update(std::span<const double> values);
  std::string hex();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view text);

}  // namespace kf
