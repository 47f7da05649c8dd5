#pragma once

// Thin RAII wrappers around OpenSSL for the four primitives the channel
// composes: SHA-256, AES-256-CBC, ECDSA-P256 and ECDH-P256.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <stdexcept>

#include "sentinel/bytes.hpp"

typedef struct evp_pkey_st EVP_PKEY;

namespace sentinel::crypto {

using Sha256Digest = std::array<std::uint8_t, 32>;
using AesKey = std::array<std::uint8_t, 32>;
using Iv = std::array<std::uint8_t, 16>;
using PrivateKey = std::array<std::uint8_t, 32>;
using PublicKey = std::array<std::uint8_t, 65>;  // uncompressed SEC1: 0x04 || X || Y
using Signature = std::array<std::uint8_t, 64>;  // r || s, big-endian

inline constexpr std::size_t kAesBlock = 16;

class CryptoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidPoint : public CryptoError {
 public:
  using CryptoError::CryptoError;
};

class PaddingError : public CryptoError {
 public:
  using CryptoError::CryptoError;
};

Sha256Digest sha256(ByteView data);

void fill_random(std::span<std::uint8_t> out);

struct ScryptParams {
  std::uint64_t n = 1u << 14;
  std::uint64_t r = 8;
  std::uint64_t p = 1;
};

/// Memory-hard password hash (RFC 7914).
Bytes scrypt(std::string_view password, ByteView salt, const ScryptParams& params, std::size_t length);

/// Constant-time equality.
bool equal_ct(ByteView a, ByteView b);

template <std::size_t N>
std::array<std::uint8_t, N> random_array() {
  std::array<std::uint8_t, N> out{};
  fill_random(out);
  return out;
}

/// With `pad` the plaintext is PKCS#7-padded; without it the input must be
/// block-aligned (used for raw known-answer checks).
Bytes aes256_cbc_encrypt(const AesKey& key, const Iv& iv, ByteView plaintext, bool pad = true);
/// Throws PaddingError when the PKCS#7 trailer is malformed.
Bytes aes256_cbc_decrypt(const AesKey& key, const Iv& iv, ByteView ciphertext, bool pad = true);

/// Throws InvalidPoint if the encoding is not an uncompressed point on P-256.
void check_public_key(const PublicKey& pub);
bool is_valid_public_key(const PublicKey& pub);

/// Throws CryptoError unless 1 <= scalar < n.
PublicKey derive_public_key(const PrivateKey& priv);

struct KeyPair {
  PrivateKey priv{};
  PublicKey pub{};
};

KeyPair generate_keypair();
/// Deterministic keypair: scalar = SHA-256(seed || counter), first value in range.
KeyPair keypair_from_seed(ByteView seed);

/// ECDSA over P-256 with SHA-256. Holds the parsed key for repeated use.
class SigningKey {
 public:
  explicit SigningKey(const PrivateKey& priv);
  Signature sign(ByteView message) const;
  const PublicKey& public_key() const { return pub_; }
  const PrivateKey& private_key() const { return priv_; }

 private:
  PrivateKey priv_;
  PublicKey pub_;
  std::shared_ptr<EVP_PKEY> pkey_;
};

class VerifyingKey {
 public:
  explicit VerifyingKey(const PublicKey& pub);
  bool verify(ByteView message, const Signature& sig) const;
  const PublicKey& public_key() const { return pub_; }

 private:
  PublicKey pub_;
  std::shared_ptr<EVP_PKEY> pkey_;
};

/// Raw ECDH: big-endian x-coordinate of priv * peer.
std::array<std::uint8_t, 32> ecdh_shared_x(const PrivateKey& priv, const PublicKey& peer);

/// Session key = SHA-256(ECDH shared x-coordinate).
AesKey derive_session_key(const PrivateKey& own_ephemeral, const PublicKey& peer_ephemeral);

}  // namespace sentinel::crypto
