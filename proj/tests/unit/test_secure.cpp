#include <doctest.h>

#include <filesystem>
#include <random>

#include "kat.hpp"
#include "sentinel/channel.hpp"
#include "sentinel/crypto.hpp"

using namespace sentinel;
using namespace sentinel::channel;
namespace c = sentinel::crypto;

namespace {

template <std::size_t N>
std::array<std::uint8_t, N> arr(std::string_view hex) {
  auto b = from_hex(hex);
  REQUIRE(b.size() == N);
  std::array<std::uint8_t, N> out{};
  std::copy(b.begin(), b.end(), out.begin());
  return out;
}

struct Pair {
  StaticIdentity robot = identity_from_private(c::keypair_from_seed(to_bytes("robot")).priv);
  StaticIdentity server = identity_from_private(c::keypair_from_seed(to_bytes("server")).priv);
  SessionKeys robot_keys;
  SessionKeys server_keys;
  TrustStore robot_trusts;   // what the robot accepts (server)
  TrustStore server_trusts;  // what the server accepts (robot)

  Pair() {
    RobotHandshake hs(robot, server.public_key());
    TrustStore allow{{robot.id, c::VerifyingKey(robot.public_key())}};
    auto accepted = accept_hello(hs.hello(), server, allow);
    server_keys = accepted.keys;
    robot_keys = hs.finish(accepted.hello_ack);
    robot_trusts.emplace(server.id, c::VerifyingKey(server.public_key()));
    server_trusts = allow;
  }
};

}  // namespace

TEST_CASE("SHA-256 known answers") {
  for (const auto& v : kat::kSha256) CHECK(to_hex(c::sha256(to_bytes(v.message))) == v.digest);
}

TEST_CASE("AES-256-CBC known answer (SP 800-38A F.2.5/F.2.6)") {
  auto key = arr<32>(kat::kAesKey);
  auto iv = arr<16>(kat::kAesIv);
  auto ct = c::aes256_cbc_encrypt(key, iv, from_hex(kat::kAesPlain), false);
  CHECK(to_hex(ct) == kat::kAesCipher);
  CHECK(to_hex(c::aes256_cbc_decrypt(key, iv, ct, false)) == kat::kAesPlain);
}

TEST_CASE("AES-256-CBC padding arithmetic") {
  c::AesKey key{};
  c::Iv iv{};
  CHECK(c::aes256_cbc_encrypt(key, iv, Bytes{0x41}).size() == 16);
  CHECK(c::aes256_cbc_encrypt(key, iv, Bytes(16, 0)).size() == 32);
  CHECK(c::aes256_cbc_encrypt(key, iv, Bytes{}).size() == 16);
  auto ct = c::aes256_cbc_encrypt(key, iv, Bytes{1, 2, 3});
  c::AesKey other{};
  other[0] = 1;
  CHECK_THROWS_AS(c::aes256_cbc_decrypt(other, iv, ct), c::PaddingError);
  CHECK_THROWS_AS(c::aes256_cbc_decrypt(key, iv, Bytes(15, 0)), c::PaddingError);
}

TEST_CASE("ECDH-P256 known answer (CAVS ECC CDH)") {
  auto priv = arr<32>(kat::kEcdhPrivate);
  CHECK(to_hex(c::derive_public_key(priv)) == std::string("04") + kat::kEcdhPublicX + kat::kEcdhPublicY);
  auto peer = arr<65>(std::string("04") + kat::kEcdhPeerX + kat::kEcdhPeerY);
  CHECK(to_hex(c::ecdh_shared_x(priv, peer)) == kat::kEcdhShared);
  CHECK(c::derive_session_key(priv, peer) == c::sha256(from_hex(kat::kEcdhShared)));
}

TEST_CASE("ECDSA-P256 known answer (RFC 6979 A.2.5)") {
  auto priv = arr<32>(kat::kEcdsaPrivate);
  auto pub = c::derive_public_key(priv);
  CHECK(to_hex(pub) == std::string("04") + kat::kEcdsaPublicX + kat::kEcdsaPublicY);
  c::VerifyingKey vk(pub);
  for (const auto& v : kat::kEcdsaVectors) {
    auto sig = arr<64>(std::string(v.r) + v.s);
    CHECK(vk.verify(to_bytes(v.message), sig));
    sig[63] ^= 1;
    CHECK_FALSE(vk.verify(to_bytes(v.message), sig));
  }
}

TEST_CASE("scrypt known answers (RFC 7914)") {
  CHECK(to_hex(crypto::scrypt("", {}, {16, 1, 1}, 64)) == kat::kScryptEmpty);
  CHECK(to_hex(crypto::scrypt("password", to_bytes("NaCl"), {1024, 8, 16}, 64)) == kat::kScryptPassword);
}

TEST_CASE("equal_ct") {
  CHECK(crypto::equal_ct(to_bytes("abc"), to_bytes("abc")));
  CHECK_FALSE(crypto::equal_ct(to_bytes("abc"), to_bytes("abd")));
  CHECK_FALSE(crypto::equal_ct(to_bytes("abc"), to_bytes("ab")));
  CHECK(crypto::equal_ct({}, {}));
}

TEST_CASE("generate_keypair") {
  auto a = c::generate_keypair();
  auto b = c::generate_keypair();
  CHECK(c::is_valid_public_key(a.pub));
  CHECK(a.priv != b.priv);
  c::SigningKey sk(a.priv);
  auto sig = sk.sign(to_bytes("hello"));
  CHECK(c::VerifyingKey(a.pub).verify(to_bytes("hello"), sig));
  CHECK_FALSE(c::VerifyingKey(b.pub).verify(to_bytes("hello"), sig));
  CHECK(c::keypair_from_seed(to_bytes("x")).priv == c::keypair_from_seed(to_bytes("x")).priv);
}

TEST_CASE("ECDH: both sides agree; invalid points are rejected") {
  auto a = c::generate_keypair();
  auto b = c::generate_keypair();
  CHECK(c::derive_session_key(a.priv, b.pub) == c::derive_session_key(b.priv, a.pub));
  auto off = b.pub;
  off[64] ^= 1;
  CHECK_THROWS_AS(c::derive_session_key(a.priv, off), c::InvalidPoint);
  c::PublicKey identity{};  // all zero: not an uncompressed point, stands for the point at infinity
  CHECK_THROWS_AS(c::derive_session_key(a.priv, identity), c::InvalidPoint);
}

TEST_CASE("envelope codec is bit-exact") {
  Envelope e;
  e.msg_type = MsgType::Command;
  e.protection = Protection::Signed;
  e.sender.fill(0xAA);
  e.seq = 0x0102030405060708ULL;
  e.payload = {0xDE, 0xAD};
  e.signature.fill(0x55);
  auto bytes = encode(e);
  REQUIRE(bytes.size() == 4 + kEnvelopeOverhead + 2);
  CHECK(bytes[0] == 0);
  CHECK(bytes[3] == kEnvelopeOverhead + 2);
  CHECK(bytes[4] == 0x03);
  CHECK(bytes[5] == 0x01);
  CHECK(bytes[6] == 0xAA);
  CHECK(bytes[22] == 0x01);
  CHECK(bytes[29] == 0x08);
  CHECK(bytes[46] == 0);  // payload length u32, last byte at 49
  CHECK(bytes[49] == 2);
  CHECK(bytes[50] == 0xDE);
  CHECK(bytes.back() == 0x55);
  CHECK(decode(bytes) == e);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode(truncated), ChannelError);
  auto bad_type = bytes;
  bad_type[4] = 0x0B;
  CHECK_THROWS_AS(decode(bad_type), ChannelError);
}

TEST_CASE("property: envelope decode(encode(e)) == e and encode is injective") {
  std::mt19937_64 rng(9);
  std::vector<Bytes> seen;
  for (int i = 0; i < 300; ++i) {
    Envelope e;
    e.msg_type = static_cast<MsgType>(1 + rng() % 10);
    e.protection = static_cast<Protection>(rng() % 3);
    for (auto& b : e.sender) b = static_cast<std::uint8_t>(rng());
    e.seq = rng();
    for (auto& b : e.iv) b = static_cast<std::uint8_t>(rng());
    e.payload.resize(rng() % 64);
    for (auto& b : e.payload) b = static_cast<std::uint8_t>(rng());
    for (auto& b : e.signature) b = static_cast<std::uint8_t>(rng());
    auto bytes = encode(e);
    CHECK(decode(bytes) == e);
    seen.push_back(bytes);
  }
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("handshake derives identical keys") {
  Pair p;
  CHECK(p.robot_keys.aes_key == p.server_keys.aes_key);
  CHECK(p.robot_keys.send_seq == 1);
  CHECK(p.server_keys.send_seq == 1);
  CHECK(p.robot_keys.recv_seq_high == 0);
}

TEST_CASE("handshake failures") {
  auto robot = identity_from_private(c::keypair_from_seed(to_bytes("robot")).priv);
  auto server = identity_from_private(c::keypair_from_seed(to_bytes("server")).priv);
  auto impostor = identity_from_private(c::keypair_from_seed(to_bytes("impostor")).priv);
  TrustStore allow{{robot.id, c::VerifyingKey(robot.public_key())}};

  SUBCASE("server key differs from the pin") {
    RobotHandshake hs(robot, server.public_key());
    auto accepted = accept_hello(hs.hello(), impostor, allow);
    try {
      hs.finish(accepted.hello_ack);
      FAIL("expected abort");
    } catch (const ChannelError& e) {
      CHECK(e.code() == ErrorCode::UnknownStaticKey);
    }
  }
  SUBCASE("robot not allowlisted") {
    RobotHandshake hs(impostor, server.public_key());
    try {
      accept_hello(hs.hello(), server, allow);
      FAIL("expected rejection");
    } catch (const ChannelError& e) {
      CHECK(e.code() == ErrorCode::UnknownStaticKey);
    }
  }
  SUBCASE("HELLO_ACK echoing the wrong nonce") {
    RobotHandshake first(robot, server.public_key());
    RobotHandshake second(robot, server.public_key());
    auto reply_to_first = accept_hello(first.hello(), server, allow);
    try {
      second.finish(reply_to_first.hello_ack);
      FAIL("expected abort");
    } catch (const ChannelError& e) {
      CHECK(e.code() == ErrorCode::NonceMismatch);
    }
  }
  SUBCASE("tampered HELLO") {
    RobotHandshake hs(robot, server.public_key());
    auto hello = hs.hello();
    hello[60] ^= 0x01;  // inside the ephemeral key
    try {
      accept_hello(hello, server, allow);
      FAIL("expected rejection");
    } catch (const ChannelError& e) {
      CHECK(e.code() == ErrorCode::BadSignature);
    }
  }
}

TEST_CASE("seal/open round trip for every class") {
  Pair p;
  auto policy = ChannelPolicy::standard();
  policy.set_minimum(MsgType::Status, Protection::Plain);
  for (auto cls : {Protection::Plain, Protection::Signed, Protection::EncryptedSigned}) {
    auto frame = seal(to_bytes("payload"), MsgType::Status, cls, p.robot_keys, p.robot, policy);
    auto opened = open(frame, p.server_keys, p.server_trusts, policy);
    CHECK(opened.msg_type == MsgType::Status);
    CHECK(to_string(opened.payload) == "payload");
  }
  CHECK(p.robot_keys.send_seq == 4);
  CHECK(p.server_keys.recv_seq_high == 3);
}

TEST_CASE("seal: class 2 uses a fresh IV; 1-byte payload encrypts to one block") {
  Pair p;
  auto policy = ChannelPolicy::standard();
  auto a = decode(seal(Bytes{7}, MsgType::Status, Protection::EncryptedSigned, p.robot_keys, p.robot, policy));
  auto b = decode(seal(Bytes{7}, MsgType::Status, Protection::EncryptedSigned, p.robot_keys, p.robot, policy));
  CHECK(a.payload.size() == 16);
  CHECK(a.iv != b.iv);
  CHECK(a.payload != b.payload);
}

TEST_CASE("open rejects with distinct error codes") {
  Pair p;
  auto policy = ChannelPolicy::standard();
  auto expect = [&](ByteView frame, ErrorCode code) {
    const auto before = p.robot_keys.recv_seq_high;
    try {
      open(frame, p.robot_keys, p.robot_trusts, policy);
      FAIL("expected rejection");
    } catch (const ChannelError& e) {
      CHECK(to_string(e.code()) == to_string(code));
    }
    CHECK(p.robot_keys.recv_seq_high == before);
  };

  SUBCASE("COMMAND below policy") {
    auto lax = ChannelPolicy::standard();
    lax.set_minimum(MsgType::Command, Protection::Plain);
    CHECK_THROWS_AS(seal(to_bytes("{}"), MsgType::Command, Protection::Plain, p.server_keys, p.server, policy),
                    ChannelError);
    expect(seal(to_bytes("{}"), MsgType::Command, Protection::Plain, p.server_keys, p.server, lax),
           ErrorCode::ClassBelowPolicy);
  }
  SUBCASE("tampered byte") {
    auto frame = seal(to_bytes("{\"kind\":\"Stop\"}"), MsgType::Command, Protection::Signed, p.server_keys, p.server,
                      policy);
    frame[frame.size() - 70] ^= 0x20;
    expect(frame, ErrorCode::BadSignature);
  }
  SUBCASE("replay") {
    auto frame = seal(to_bytes("{}"), MsgType::Command, Protection::Signed, p.server_keys, p.server, policy);
    open(frame, p.robot_keys, p.robot_trusts, policy);
    expect(frame, ErrorCode::Replay);
  }
  SUBCASE("unknown sender") {
    auto stranger = identity_from_private(c::keypair_from_seed(to_bytes("stranger")).priv);
    expect(seal(to_bytes("{}"), MsgType::Command, Protection::Signed, p.server_keys, stranger, policy),
           ErrorCode::UnknownSender);
  }
  SUBCASE("bad padding under a valid signature") {
    // Build an envelope whose ciphertext decrypts to garbage padding, then sign it properly.
    Envelope env;
    env.msg_type = MsgType::Status;
    env.protection = Protection::EncryptedSigned;
    env.sender = p.server.id;
    env.seq = 1;
    env.iv.fill(3);
    c::AesKey wrong{};
    env.payload = c::aes256_cbc_encrypt(wrong, env.iv, Bytes(16, 0x11), false);
    env.signature = p.server.key.sign(signed_bytes(env));
    expect(encode(env), ErrorCode::BadPadding);
  }
  SUBCASE("malformed") { expect(Bytes{0, 0, 0, 1, 5}, ErrorCode::Malformed); }
}

TEST_CASE("key files round trip") {
  auto dir = std::filesystem::temp_directory_path() / "sentinel-keyfile-test";
  std::filesystem::create_directories(dir);
  auto kp = c::generate_keypair();
  write_private_key_file((dir / "k.key").string(), kp.priv);
  write_public_key_file((dir / "k.pub").string(), kp.pub);
  CHECK(read_private_key_file((dir / "k.key").string()) == kp.priv);
  auto pubs = read_public_key_file((dir / "k.pub").string());
  REQUIRE(pubs.size() == 1);
  CHECK(pubs[0] == kp.pub);
  CHECK_THROWS_AS(read_private_key_file((dir / "missing.key").string()), KeyFileError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("uuid text form") {
  auto id = random_uuid();
  auto text = format_uuid(id);
  CHECK(text.size() == 36);
  CHECK(parse_uuid(text) == id);
  CHECK_FALSE(parse_uuid("not-a-uuid").has_value());
}
