#pragma once

// Minimal SHA-256 (FIPS 180-4), used to fingerprint weight containers.
// Self-contained on purpose: one hash is not worth a crypto-library link.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace wilson {

std::string sha256_hex(const std::uint8_t* data, std::size_t len);

inline std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  return sha256_hex(bytes.data(), bytes.size());
}

inline std::string sha256_hex(const std::string& s) {
  return sha256_hex(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

}  // namespace wilson
