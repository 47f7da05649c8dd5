#include "sentinel/crypto.hpp"

#include <openssl/bn.h>
#include <openssl/core_names.h>
#include <openssl/ec.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/obj_mac.h>
#include <openssl/param_build.h>
#include <openssl/crypto.h>
#include <openssl/rand.h>

#include <string>

namespace sentinel::crypto {

namespace {

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};

using BnPtr = std::unique_ptr<BIGNUM, Deleter<BIGNUM, BN_free>>;
using BnCtxPtr = std::unique_ptr<BN_CTX, Deleter<BN_CTX, BN_CTX_free>>;
using GroupPtr = std::unique_ptr<EC_GROUP, Deleter<EC_GROUP, EC_GROUP_free>>;
using PointPtr = std::unique_ptr<EC_POINT, Deleter<EC_POINT, EC_POINT_free>>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, Deleter<EVP_CIPHER_CTX, EVP_CIPHER_CTX_free>>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, Deleter<EVP_MD_CTX, EVP_MD_CTX_free>>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, Deleter<EVP_PKEY_CTX, EVP_PKEY_CTX_free>>;
using ParamBldPtr = std::unique_ptr<OSSL_PARAM_BLD, Deleter<OSSL_PARAM_BLD, OSSL_PARAM_BLD_free>>;
using ParamPtr = std::unique_ptr<OSSL_PARAM, Deleter<OSSL_PARAM, OSSL_PARAM_free>>;
using SigPtr = std::unique_ptr<ECDSA_SIG, Deleter<ECDSA_SIG, ECDSA_SIG_free>>;

[[noreturn]] void raise(const std::string& what) {
  unsigned long code = ERR_get_error();
  std::string detail;
  if (code != 0) {
    char buf[256];
    ERR_error_string_n(code, buf, sizeof(buf));
    detail = std::string(": ") + buf;
  }
  ERR_clear_error();
  throw CryptoError(what + detail);
}

const EC_GROUP* p256() {
  static const GroupPtr group(EC_GROUP_new_by_curve_name(NID_X9_62_prime256v1));
  return group.get();
}

PointPtr decode_point(const PublicKey& pub) {
  if (pub[0] != 0x04) throw InvalidPoint("public key is not an uncompressed SEC1 point");
  PointPtr point(EC_POINT_new(p256()));
  if (!point) raise("EC_POINT_new");
  BnCtxPtr ctx(BN_CTX_new());
  if (EC_POINT_oct2point(p256(), point.get(), pub.data(), pub.size(), ctx.get()) != 1) {
    ERR_clear_error();
    throw InvalidPoint("public key is not on P-256");
  }
  if (EC_POINT_is_at_infinity(p256(), point.get()) || EC_POINT_is_on_curve(p256(), point.get(), ctx.get()) != 1) {
    ERR_clear_error();
    throw InvalidPoint("public key is not a valid P-256 point");
  }
  return point;
}

std::shared_ptr<EVP_PKEY> make_pkey(const PrivateKey* priv, const PublicKey& pub) {
  ParamBldPtr bld(OSSL_PARAM_BLD_new());
  if (!bld) raise("OSSL_PARAM_BLD_new");
  BnPtr scalar;
  OSSL_PARAM_BLD_push_utf8_string(bld.get(), OSSL_PKEY_PARAM_GROUP_NAME, SN_X9_62_prime256v1, 0);
  OSSL_PARAM_BLD_push_octet_string(bld.get(), OSSL_PKEY_PARAM_PUB_KEY, pub.data(), pub.size());
  if (priv != nullptr) {
    scalar.reset(BN_bin2bn(priv->data(), static_cast<int>(priv->size()), nullptr));
    if (!scalar) raise("BN_bin2bn");
    OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_PRIV_KEY, scalar.get());
  }
  ParamPtr params(OSSL_PARAM_BLD_to_param(bld.get()));
  if (!params) raise("OSSL_PARAM_BLD_to_param");

  PkeyCtxPtr ctx(EVP_PKEY_CTX_new_from_name(nullptr, "EC", nullptr));
  if (!ctx || EVP_PKEY_fromdata_init(ctx.get()) != 1) raise("EVP_PKEY_fromdata_init");
  EVP_PKEY* raw = nullptr;
  const int selection = priv != nullptr ? EVP_PKEY_KEYPAIR : EVP_PKEY_PUBLIC_KEY;
  if (EVP_PKEY_fromdata(ctx.get(), &raw, selection, params.get()) != 1) raise("EVP_PKEY_fromdata");
  return std::shared_ptr<EVP_PKEY>(raw, EVP_PKEY_free);
}

Bytes run_cipher(bool encrypt, const AesKey& key, const Iv& iv, ByteView input, bool pad) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) raise("EVP_CIPHER_CTX_new");
  if (EVP_CipherInit_ex(ctx.get(), EVP_aes_256_cbc(), nullptr, key.data(), iv.data(), encrypt ? 1 : 0) != 1) {
    raise("EVP_CipherInit_ex");
  }
  EVP_CIPHER_CTX_set_padding(ctx.get(), pad ? 1 : 0);
  Bytes out(input.size() + kAesBlock);
  int len = 0;
  if (EVP_CipherUpdate(ctx.get(), out.data(), &len, input.data(), static_cast<int>(input.size())) != 1) {
    raise("EVP_CipherUpdate");
  }
  int tail = 0;
  if (EVP_CipherFinal_ex(ctx.get(), out.data() + len, &tail) != 1) {
    ERR_clear_error();
    if (!encrypt) throw PaddingError("bad PKCS#7 padding");
    throw CryptoError("AES-256-CBC encryption failed (input not block aligned?)");
  }
  out.resize(static_cast<std::size_t>(len + tail));
  return out;
}

}  // namespace

Sha256Digest sha256(ByteView data) {
  Sha256Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1) raise("EVP_Digest");
  return out;
}

void fill_random(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) raise("RAND_bytes: entropy unavailable");
}

Bytes scrypt(std::string_view password, ByteView salt, const ScryptParams& params, std::size_t length) {
  Bytes out(length);
  const std::uint64_t maxmem = 128 * params.r * (params.n + params.p + 2) + (1u << 20);
  if (EVP_PBE_scrypt(password.data(), password.size(), salt.data(), salt.size(), params.n, params.r, params.p, maxmem,
                     out.data(), out.size()) != 1) {
    raise("EVP_PBE_scrypt");
  }
  return out;
}

bool equal_ct(ByteView a, ByteView b) {
  return a.size() == b.size() && (a.empty() || CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0);
}

Bytes aes256_cbc_encrypt(const AesKey& key, const Iv& iv, ByteView plaintext, bool pad) {
  return run_cipher(true, key, iv, plaintext, pad);
}

Bytes aes256_cbc_decrypt(const AesKey& key, const Iv& iv, ByteView ciphertext, bool pad) {
  if (ciphertext.empty() || ciphertext.size() % kAesBlock != 0) {
    throw PaddingError("ciphertext length is not a positive multiple of the block size");
  }
  return run_cipher(false, key, iv, ciphertext, pad);
}

void check_public_key(const PublicKey& pub) { decode_point(pub); }

bool is_valid_public_key(const PublicKey& pub) {
  try {
    decode_point(pub);
    return true;
  } catch (const InvalidPoint&) {
    return false;
  }
}

PublicKey derive_public_key(const PrivateKey& priv) {
  BnCtxPtr ctx(BN_CTX_new());
  BnPtr scalar(BN_bin2bn(priv.data(), static_cast<int>(priv.size()), nullptr));
  if (!ctx || !scalar) raise("BN allocation");
  const BIGNUM* order = EC_GROUP_get0_order(p256());
  if (BN_is_zero(scalar.get()) || BN_cmp(scalar.get(), order) >= 0) throw CryptoError("private scalar out of range");
  PointPtr point(EC_POINT_new(p256()));
  if (!point || EC_POINT_mul(p256(), point.get(), scalar.get(), nullptr, nullptr, ctx.get()) != 1) {
    raise("EC_POINT_mul");
  }
  PublicKey pub{};
  if (EC_POINT_point2oct(p256(), point.get(), POINT_CONVERSION_UNCOMPRESSED, pub.data(), pub.size(), ctx.get()) !=
      pub.size()) {
    raise("EC_POINT_point2oct");
  }
  return pub;
}

KeyPair generate_keypair() {
  KeyPair kp;
  for (;;) {
    fill_random(kp.priv);
    try {
      kp.pub = derive_public_key(kp.priv);
      return kp;
    } catch (const CryptoError&) {
      // Scalar out of range; astronomically unlikely, draw again.
    }
  }
}

KeyPair keypair_from_seed(ByteView seed) {
  for (std::uint32_t counter = 0;; ++counter) {
    Bytes input(seed.begin(), seed.end());
    put_u32(input, counter);
    KeyPair kp;
    kp.priv = sha256(input);
    try {
      kp.pub = derive_public_key(kp.priv);
      return kp;
    } catch (const CryptoError&) {
    }
  }
}

SigningKey::SigningKey(const PrivateKey& priv) : priv_(priv), pub_(derive_public_key(priv)) {
  pkey_ = make_pkey(&priv_, pub_);
}

Signature SigningKey::sign(ByteView message) const {
  MdCtxPtr md(EVP_MD_CTX_new());
  if (!md || EVP_DigestSignInit(md.get(), nullptr, EVP_sha256(), nullptr, pkey_.get()) != 1) {
    raise("EVP_DigestSignInit");
  }
  std::size_t der_len = 0;
  if (EVP_DigestSign(md.get(), nullptr, &der_len, message.data(), message.size()) != 1) raise("EVP_DigestSign");
  Bytes der(der_len);
  if (EVP_DigestSign(md.get(), der.data(), &der_len, message.data(), message.size()) != 1) raise("EVP_DigestSign");
  const unsigned char* p = der.data();
  SigPtr sig(d2i_ECDSA_SIG(nullptr, &p, static_cast<long>(der_len)));
  if (!sig) raise("d2i_ECDSA_SIG");
  const BIGNUM* r = nullptr;
  const BIGNUM* s = nullptr;
  ECDSA_SIG_get0(sig.get(), &r, &s);
  Signature out{};
  if (BN_bn2binpad(r, out.data(), 32) != 32 || BN_bn2binpad(s, out.data() + 32, 32) != 32) raise("BN_bn2binpad");
  return out;
}

VerifyingKey::VerifyingKey(const PublicKey& pub) : pub_(pub) {
  check_public_key(pub_);
  pkey_ = make_pkey(nullptr, pub_);
}

bool VerifyingKey::verify(ByteView message, const Signature& sig) const {
  SigPtr ecsig(ECDSA_SIG_new());
  BIGNUM* r = BN_bin2bn(sig.data(), 32, nullptr);
  BIGNUM* s = BN_bin2bn(sig.data() + 32, 32, nullptr);
  if (!ecsig || !r || !s || ECDSA_SIG_set0(ecsig.get(), r, s) != 1) {
    BN_free(r);
    BN_free(s);
    raise("ECDSA_SIG_set0");
  }
  unsigned char* der = nullptr;
  const int der_len = i2d_ECDSA_SIG(ecsig.get(), &der);
  if (der_len <= 0) raise("i2d_ECDSA_SIG");
  std::unique_ptr<unsigned char, void (*)(unsigned char*)> der_guard(der, [](unsigned char* p) { OPENSSL_free(p); });

  MdCtxPtr md(EVP_MD_CTX_new());
  if (!md || EVP_DigestVerifyInit(md.get(), nullptr, EVP_sha256(), nullptr, pkey_.get()) != 1) {
    raise("EVP_DigestVerifyInit");
  }
  const int rc = EVP_DigestVerify(md.get(), der, static_cast<std::size_t>(der_len), message.data(), message.size());
  ERR_clear_error();
  return rc == 1;
}

std::array<std::uint8_t, 32> ecdh_shared_x(const PrivateKey& priv, const PublicKey& peer) {
  PointPtr peer_point = decode_point(peer);
  BnCtxPtr ctx(BN_CTX_new());
  BnPtr scalar(BN_bin2bn(priv.data(), static_cast<int>(priv.size()), nullptr));
  if (!ctx || !scalar) raise("BN allocation");
  const BIGNUM* order = EC_GROUP_get0_order(p256());
  if (BN_is_zero(scalar.get()) || BN_cmp(scalar.get(), order) >= 0) throw CryptoError("private scalar out of range");
  PointPtr shared(EC_POINT_new(p256()));
  if (!shared || EC_POINT_mul(p256(), shared.get(), nullptr, peer_point.get(), scalar.get(), ctx.get()) != 1) {
    raise("EC_POINT_mul");
  }
  if (EC_POINT_is_at_infinity(p256(), shared.get())) throw InvalidPoint("shared point is the identity");
  BnPtr x(BN_new());
  if (!x || EC_POINT_get_affine_coordinates(p256(), shared.get(), x.get(), nullptr, ctx.get()) != 1) {
    raise("EC_POINT_get_affine_coordinates");
  }
  std::array<std::uint8_t, 32> out{};
  if (BN_bn2binpad(x.get(), out.data(), 32) != 32) raise("BN_bn2binpad");
  return out;
}

AesKey derive_session_key(const PrivateKey& own_ephemeral, const PublicKey& peer_ephemeral) {
  return sha256(ecdh_shared_x(own_ephemeral, peer_ephemeral));
}

}  // namespace sentinel::crypto
