#pragma once

// libsodium wrappers: password hashing, random identifiers, content hashes.

#include <sodium.h>

#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "mrsq/error.hpp"

namespace mrsq::platform::crypto {

inline void ensure_init() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw Error("libsodium initialisation failed");
  });
}

inline std::string to_hex(const unsigned char* data, std::size_t n) {
  std::string out(2 * n + 1, '\0');
  sodium_bin2hex(out.data(), out.size(), data, n);
  out.pop_back();
  return out;
}

/// Hex string of `bytes` random bytes.
inline std::string random_hex(std::size_t bytes = 16) {
  ensure_init();
  std::vector<unsigned char> buf(bytes);
  randombytes_buf(buf.data(), buf.size());
  return to_hex(buf.data(), buf.size());
}

inline std::string sha256_hex(std::string_view data) {
  ensure_init();
  unsigned char h[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(h, reinterpret_cast<const unsigned char*>(data.data()), data.size());
  return to_hex(h, sizeof h);
}

enum class HashCost { interactive, minimal };

/// Salted Argon2id hash in the self-describing libsodium string format.
inline std::string hash_password(std::string_view password, HashCost cost = HashCost::interactive) {
  ensure_init();
  char out[crypto_pwhash_STRBYTES];
  const auto ops = cost == HashCost::interactive ? crypto_pwhash_OPSLIMIT_INTERACTIVE : crypto_pwhash_OPSLIMIT_MIN;
  const auto mem = cost == HashCost::interactive ? crypto_pwhash_MEMLIMIT_INTERACTIVE : crypto_pwhash_MEMLIMIT_MIN;
  if (crypto_pwhash_str(out, password.data(), password.size(), ops, mem) != 0)
    throw Error("password hashing ran out of memory");
  return out;
}

inline bool verify_password(const std::string& stored, std::string_view password) {
  ensure_init();
  return crypto_pwhash_str_verify(stored.c_str(), password.data(), password.size()) == 0;
}

}  // namespace mrsq::platform::crypto
