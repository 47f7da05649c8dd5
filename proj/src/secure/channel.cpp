#include "sentinel/channel.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace sentinel::channel {

std::string_view to_string(MsgType t) {
  switch (t) {
    case MsgType::Hello: return "HELLO";
    case MsgType::HelloAck: return "HELLO_ACK";
    case MsgType::Command: return "COMMAND";
    case MsgType::Status: return "STATUS";
    case MsgType::Frame: return "FRAME";
    case MsgType::FireAlert: return "FIRE_ALERT";
    case MsgType::MotionEvent: return "MOTION_EVENT";
    case MsgType::ClipUpload: return "CLIP_UPLOAD";
    case MsgType::Ack: return "ACK";
    case MsgType::Error: return "ERROR";
  }
  return "UNKNOWN";
}

bool is_known_msg_type(std::uint8_t code) { return code >= 0x01 && code <= 0x0A; }

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Malformed: return "malformed";
    case ErrorCode::UnknownSender: return "unknown_sender";
    case ErrorCode::ClassBelowPolicy: return "class_below_policy";
    case ErrorCode::BadSignature: return "bad_signature";
    case ErrorCode::Replay: return "replay";
    case ErrorCode::BadPadding: return "bad_padding";
    case ErrorCode::PolicyViolation: return "policy_violation";
    case ErrorCode::HandshakeFailed: return "handshake_failed";
    case ErrorCode::UnknownStaticKey: return "unknown_static_key";
    case ErrorCode::NonceMismatch: return "nonce_mismatch";
    case ErrorCode::Timeout: return "timeout";
  }
  return "unknown";
}

std::string format_uuid(const SenderId& id) {
  const std::string hex = to_hex(id);
  return hex.substr(0, 8) + "-" + hex.substr(8, 4) + "-" + hex.substr(12, 4) + "-" + hex.substr(16, 4) + "-" +
         hex.substr(20, 12);
}

std::optional<SenderId> parse_uuid(std::string_view text) {
  if (text.size() != 36) return std::nullopt;
  std::string hex;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i == 8 || i == 13 || i == 18 || i == 23) {
      if (text[i] != '-') return std::nullopt;
      continue;
    }
    hex.push_back(text[i]);
  }
  try {
    auto raw = from_hex(hex);
    SenderId id{};
    std::copy(raw.begin(), raw.end(), id.begin());
    return id;
  } catch (const DecodeError&) {
    return std::nullopt;
  }
}

SenderId random_uuid() {
  auto id = crypto::random_array<16>();
  id[6] = static_cast<std::uint8_t>((id[6] & 0x0f) | 0x40);
  id[8] = static_cast<std::uint8_t>((id[8] & 0x3f) | 0x80);
  return id;
}

Bytes encode(const Envelope& env) {
  Bytes out;
  out.reserve(4 + kEnvelopeOverhead + env.payload.size());
  put_u32(out, static_cast<std::uint32_t>(kEnvelopeOverhead + env.payload.size()));
  put_u8(out, static_cast<std::uint8_t>(env.msg_type));
  put_u8(out, static_cast<std::uint8_t>(env.protection));
  put_bytes(out, env.sender);
  put_u64(out, env.seq);
  put_bytes(out, env.iv);
  put_u32(out, static_cast<std::uint32_t>(env.payload.size()));
  put_bytes(out, env.payload);
  put_bytes(out, env.signature);
  return out;
}

Envelope decode(ByteView frame) {
  try {
    Reader in(frame);
    const std::uint32_t remaining = in.u32();
    if (remaining != in.remaining()) throw ChannelError(ErrorCode::Malformed, "frame length mismatch");
    if (remaining < kEnvelopeOverhead) throw ChannelError(ErrorCode::Malformed, "frame shorter than header");
    Envelope env;
    const std::uint8_t type = in.u8();
    if (!is_known_msg_type(type)) throw ChannelError(ErrorCode::Malformed, "unknown msg_type");
    env.msg_type = static_cast<MsgType>(type);
    const std::uint8_t cls = in.u8();
    if (cls > 2) throw ChannelError(ErrorCode::Malformed, "unknown protection class");
    env.protection = static_cast<Protection>(cls);
    env.sender = in.array<16>();
    env.seq = in.u64();
    env.iv = in.array<16>();
    const std::uint32_t len = in.u32();
    if (len != remaining - kEnvelopeOverhead) throw ChannelError(ErrorCode::Malformed, "payload length mismatch");
    auto payload = in.take(len);
    env.payload.assign(payload.begin(), payload.end());
    env.signature = in.array<64>();
    return env;
  } catch (const DecodeError& e) {
    throw ChannelError(ErrorCode::Malformed, e.what());
  }
}

Bytes signed_bytes(const Envelope& env) {
  Bytes out;
  out.reserve(1 + 1 + 16 + 8 + 16 + env.payload.size());
  put_u8(out, static_cast<std::uint8_t>(env.msg_type));
  put_u8(out, static_cast<std::uint8_t>(env.protection));
  put_bytes(out, env.sender);
  put_u64(out, env.seq);
  put_bytes(out, env.iv);
  put_bytes(out, env.payload);
  return out;
}

ChannelPolicy ChannelPolicy::standard() {
  ChannelPolicy p;
  p.minimum_ = {
      {MsgType::Hello, Protection::Signed},       {MsgType::HelloAck, Protection::Signed},
      {MsgType::Command, Protection::Signed},     {MsgType::Status, Protection::EncryptedSigned},
      {MsgType::Frame, Protection::Plain},        {MsgType::FireAlert, Protection::Signed},
      {MsgType::MotionEvent, Protection::Signed}, {MsgType::ClipUpload, Protection::EncryptedSigned},
      {MsgType::Ack, Protection::Signed},         {MsgType::Error, Protection::Signed},
  };
  return p;
}

Protection ChannelPolicy::minimum(MsgType t) const {
  auto it = minimum_.find(t);
  return it == minimum_.end() ? Protection::Signed : it->second;
}

SenderId id_for_public_key(const crypto::PublicKey& pub) {
  auto digest = crypto::sha256(pub);
  SenderId id{};
  std::copy_n(digest.begin(), id.size(), id.begin());
  id[6] = static_cast<std::uint8_t>((id[6] & 0x0f) | 0x80);
  id[8] = static_cast<std::uint8_t>((id[8] & 0x3f) | 0x80);
  return id;
}

StaticIdentity identity_from_private(const crypto::PrivateKey& priv) {
  return StaticIdentity(id_for_public_key(crypto::derive_public_key(priv)), priv);
}

Bytes seal(ByteView payload, MsgType type, Protection protection, SessionKeys& keys, const StaticIdentity& identity,
           const ChannelPolicy& policy) {
  if (static_cast<int>(protection) < static_cast<int>(policy.minimum(type))) {
    throw ChannelError(ErrorCode::PolicyViolation,
                       std::string(to_string(type)) + " requires a stronger protection class");
  }
  Envelope env;
  env.msg_type = type;
  env.protection = protection;
  env.sender = identity.id;
  env.seq = keys.send_seq;
  if (protection == Protection::EncryptedSigned) {
    env.iv = crypto::random_array<16>();
    env.payload = crypto::aes256_cbc_encrypt(keys.aes_key, env.iv, payload);
  } else {
    env.payload.assign(payload.begin(), payload.end());
  }
  if (protection != Protection::Plain) env.signature = identity.key.sign(signed_bytes(env));
  keys.send_seq += 1;
  return encode(env);
}

Opened open(ByteView frame, SessionKeys& keys, const TrustStore& trusted, const ChannelPolicy& policy) {
  Envelope env = decode(frame);
  auto signer = trusted.find(env.sender);
  if (signer == trusted.end()) throw ChannelError(ErrorCode::UnknownSender, "sender not trusted on this channel");
  if (static_cast<int>(env.protection) < static_cast<int>(policy.minimum(env.msg_type))) {
    throw ChannelError(ErrorCode::ClassBelowPolicy,
                       std::string(to_string(env.msg_type)) + " arrived below its minimum protection class");
  }
  if (env.protection == Protection::Plain) {
    const bool clean = std::all_of(env.iv.begin(), env.iv.end(), [](auto b) { return b == 0; }) &&
                       std::all_of(env.signature.begin(), env.signature.end(), [](auto b) { return b == 0; });
    if (!clean) throw ChannelError(ErrorCode::Malformed, "plain envelope carries iv or signature bytes");
  } else {
    if (env.protection == Protection::Signed &&
        !std::all_of(env.iv.begin(), env.iv.end(), [](auto b) { return b == 0; })) {
      throw ChannelError(ErrorCode::Malformed, "signed envelope carries a non-zero iv");
    }
    if (!signer->second.verify(signed_bytes(env), env.signature)) {
      throw ChannelError(ErrorCode::BadSignature, "signature verification failed");
    }
  }
  if (env.seq <= keys.recv_seq_high) throw ChannelError(ErrorCode::Replay, "sequence number not fresh");

  Opened out{env.msg_type, {}, env.sender, env.seq};
  if (env.protection == Protection::EncryptedSigned) {
    try {
      out.payload = crypto::aes256_cbc_decrypt(keys.aes_key, env.iv, env.payload);
    } catch (const crypto::PaddingError& e) {
      throw ChannelError(ErrorCode::BadPadding, e.what());
    }
  } else {
    out.payload = std::move(env.payload);
  }
  keys.recv_seq_high = env.seq;
  return out;
}

namespace {

Bytes hello_payload(const crypto::PublicKey& eph, const crypto::PublicKey& stat, ByteView nonce) {
  Bytes p;
  p.reserve(kHelloPayloadSize);
  put_bytes(p, eph);
  put_bytes(p, stat);
  put_bytes(p, nonce);
  return p;
}

struct HelloFields {
  crypto::PublicKey ephemeral{};
  crypto::PublicKey static_key{};
  std::array<std::uint8_t, 16> nonce{};
};

HelloFields split_hello(const Envelope& env) {
  if (env.payload.size() != kHelloPayloadSize) throw ChannelError(ErrorCode::Malformed, "handshake payload size");
  Reader in(env.payload);
  HelloFields f;
  f.ephemeral = in.array<65>();
  f.static_key = in.array<65>();
  f.nonce = in.array<16>();
  return f;
}

Bytes signed_handshake(MsgType type, const StaticIdentity& who, Bytes payload) {
  Envelope env;
  env.msg_type = type;
  env.protection = Protection::Signed;
  env.sender = who.id;
  env.seq = 0;
  env.payload = std::move(payload);
  env.signature = who.key.sign(signed_bytes(env));
  return encode(env);
}

}  // namespace

RobotHandshake::RobotHandshake(const StaticIdentity& identity, const crypto::PublicKey& pinned_server)
    : identity_(identity),
      pinned_server_(pinned_server),
      ephemeral_(crypto::generate_keypair()),
      nonce_(crypto::random_array<16>()) {}

Bytes RobotHandshake::hello() const {
  return signed_handshake(MsgType::Hello, identity_, hello_payload(ephemeral_.pub, identity_.public_key(), nonce_));
}

SessionKeys RobotHandshake::finish(ByteView hello_ack_frame) const {
  Envelope env = decode(hello_ack_frame);
  if (env.msg_type != MsgType::HelloAck || env.protection != Protection::Signed) {
    throw ChannelError(ErrorCode::HandshakeFailed, "expected a signed HELLO_ACK");
  }
  HelloFields f = split_hello(env);
  if (f.static_key != pinned_server_) throw ChannelError(ErrorCode::UnknownStaticKey, "server key does not match pin");
  if (env.sender != id_for_public_key(pinned_server_)) {
    throw ChannelError(ErrorCode::UnknownStaticKey, "server id does not match pinned key");
  }
  if (!crypto::VerifyingKey(pinned_server_).verify(signed_bytes(env), env.signature)) {
    throw ChannelError(ErrorCode::BadSignature, "HELLO_ACK signature invalid");
  }
  if (f.nonce != nonce_) throw ChannelError(ErrorCode::NonceMismatch, "HELLO_ACK echoes the wrong nonce");
  SessionKeys keys;
  try {
    keys.aes_key = crypto::derive_session_key(ephemeral_.priv, f.ephemeral);
  } catch (const crypto::CryptoError& e) {
    throw ChannelError(ErrorCode::HandshakeFailed, e.what());
  }
  keys.peer_public = f.ephemeral;
  return keys;
}

ServerAccept accept_hello(ByteView hello_frame, const StaticIdentity& server, const TrustStore& allowlist) {
  Envelope env = decode(hello_frame);
  if (env.msg_type != MsgType::Hello || env.protection != Protection::Signed) {
    throw ChannelError(ErrorCode::HandshakeFailed, "expected a signed HELLO");
  }
  HelloFields f = split_hello(env);
  auto known = allowlist.find(env.sender);
  if (known == allowlist.end() || known->second.public_key() != f.static_key) {
    throw ChannelError(ErrorCode::UnknownStaticKey, "robot static key not allowlisted");
  }
  if (!known->second.verify(signed_bytes(env), env.signature)) {
    throw ChannelError(ErrorCode::BadSignature, "HELLO signature invalid");
  }
  auto eph = crypto::generate_keypair();
  ServerAccept out;
  out.robot_id = env.sender;
  out.robot_static = f.static_key;
  try {
    out.keys.aes_key = crypto::derive_session_key(eph.priv, f.ephemeral);
  } catch (const crypto::CryptoError& e) {
    throw ChannelError(ErrorCode::HandshakeFailed, e.what());
  }
  out.keys.peer_public = f.ephemeral;
  out.hello_ack = signed_handshake(MsgType::HelloAck, server, hello_payload(eph.pub, server.public_key(), f.nonce));
  return out;
}

namespace {

std::vector<std::string> read_hex_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw KeyFileError("cannot open key file '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    line.erase(std::remove_if(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }), line.end());
    if (line.empty() || line.front() == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw KeyFileError("cannot write key file '" + path + "'");
  out << text;
  if (!out) throw KeyFileError("write failed for '" + path + "'");
}

}  // namespace

void write_private_key_file(const std::string& path, const crypto::PrivateKey& priv) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (fd < 0) throw KeyFileError("cannot write key file '" + path + "'");
  ::fchmod(fd, 0600);
  const std::string text = to_hex(priv) + "\n";
  const bool ok = ::write(fd, text.data(), text.size()) == static_cast<ssize_t>(text.size());
  ::close(fd);
  if (!ok) throw KeyFileError("write failed for '" + path + "'");
}

void write_public_key_file(const std::string& path, const crypto::PublicKey& pub) {
  write_text(path, to_hex(pub) + "\n");
}

crypto::PublicKey parse_public_key_hex(std::string_view hex) {
  Bytes raw;
  try {
    raw = from_hex(hex);
  } catch (const DecodeError& e) {
    throw KeyFileError(std::string("public key: ") + e.what());
  }
  if (raw.size() != 65) throw KeyFileError("public key must be 65 bytes (uncompressed SEC1)");
  crypto::PublicKey pub{};
  std::copy(raw.begin(), raw.end(), pub.begin());
  if (!crypto::is_valid_public_key(pub)) throw KeyFileError("public key is not a valid P-256 point");
  return pub;
}

crypto::PrivateKey read_private_key_file(const std::string& path) {
  auto lines = read_hex_lines(path);
  if (lines.size() != 1) throw KeyFileError("private key file '" + path + "' must hold exactly one key");
  Bytes raw;
  try {
    raw = from_hex(lines.front());
  } catch (const DecodeError& e) {
    throw KeyFileError("private key file '" + path + "': " + e.what());
  }
  if (raw.size() != 32) throw KeyFileError("private key must be 32 bytes");
  crypto::PrivateKey priv{};
  std::copy(raw.begin(), raw.end(), priv.begin());
  try {
    crypto::derive_public_key(priv);
  } catch (const crypto::CryptoError& e) {
    throw KeyFileError(std::string("private key invalid: ") + e.what());
  }
  return priv;
}

std::vector<crypto::PublicKey> read_public_key_file(const std::string& path) {
  std::vector<crypto::PublicKey> keys;
  for (const auto& line : read_hex_lines(path)) keys.push_back(parse_public_key_hex(line));
  return keys;
}

}  // namespace sentinel::channel
