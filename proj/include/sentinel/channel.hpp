#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "sentinel/bytes.hpp"
#include "sentinel/crypto.hpp"

namespace sentinel::channel {

enum class MsgType : std::uint8_t {
  Hello = 0x01,
  HelloAck = 0x02,
  Command = 0x03,
  Status = 0x04,
  Frame = 0x05,
  FireAlert = 0x06,
  MotionEvent = 0x07,
  ClipUpload = 0x08,
  Ack = 0x09,
  Error = 0x0A,
};

enum class Protection : std::uint8_t { Plain = 0, Signed = 1, EncryptedSigned = 2 };

std::string_view to_string(MsgType t);
bool is_known_msg_type(std::uint8_t code);

using SenderId = std::array<std::uint8_t, 16>;

/// Canonical 8-4-4-4-12 lowercase text form.
std::string format_uuid(const SenderId& id);
std::optional<SenderId> parse_uuid(std::string_view text);
SenderId random_uuid();

/// Wire record for every robot<->server message.
struct Envelope {
  MsgType msg_type = MsgType::Ack;
  Protection protection = Protection::Plain;
  SenderId sender{};
  std::uint64_t seq = 0;
  crypto::Iv iv{};
  Bytes payload;
  crypto::Signature signature{};

  bool operator==(const Envelope&) const = default;
};

inline constexpr std::size_t kEnvelopeOverhead = 1 + 1 + 16 + 8 + 16 + 4 + 64;
inline constexpr std::size_t kMaxFrameLength = 64u * 1024u * 1024u;

/// u32 remaining-length | u8 type | u8 class | sender | u64 seq | iv | u32 len | payload | signature
Bytes encode(const Envelope& env);
/// Accepts exactly one complete frame. Throws ChannelError(Malformed).
Envelope decode(ByteView frame);

/// Bytes covered by the signature: type | class | sender | seq | iv | payload.
Bytes signed_bytes(const Envelope& env);

enum class ErrorCode {
  Malformed,
  UnknownSender,
  ClassBelowPolicy,
  BadSignature,
  Replay,
  BadPadding,
  PolicyViolation,
  HandshakeFailed,
  UnknownStaticKey,
  NonceMismatch,
  Timeout,
};

std::string_view to_string(ErrorCode code);

class ChannelError : public std::runtime_error {
 public:
  ChannelError(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Minimum protection per message type.
class ChannelPolicy {
 public:
  /// Defaults: COMMAND, FIRE_ALERT, MOTION_EVENT, ACK, ERROR, HELLO* signed;
  /// STATUS, CLIP_UPLOAD encrypted+signed; FRAME plain.
  static ChannelPolicy standard();

  Protection minimum(MsgType t) const;
  void set_minimum(MsgType t, Protection p) { minimum_[t] = p; }

 private:
  std::map<MsgType, Protection> minimum_;
};

struct StaticIdentity {
  SenderId id{};
  crypto::SigningKey key;

  StaticIdentity(const SenderId& sid, const crypto::PrivateKey& priv) : id(sid), key(priv) {}
  const crypto::PublicKey& public_key() const { return key.public_key(); }
};

/// Robot ids are bound to their signing key: the first 16 bytes of
/// SHA-256(public key) with RFC 4122 version-8 / variant bits set.
SenderId id_for_public_key(const crypto::PublicKey& pub);
StaticIdentity identity_from_private(const crypto::PrivateKey& priv);

struct SessionKeys {
  crypto::AesKey aes_key{};
  std::uint64_t send_seq = 1;
  std::uint64_t recv_seq_high = 0;
  crypto::PublicKey peer_public{};
};

using TrustStore = std::map<SenderId, crypto::VerifyingKey>;

struct Opened {
  MsgType msg_type;
  Bytes payload;
  SenderId sender;
  std::uint64_t seq;
};

/// Encrypt-then-sign sealing. Consumes one sequence number.
Bytes seal(ByteView payload, MsgType type, Protection protection, SessionKeys& keys, const StaticIdentity& identity,
           const ChannelPolicy& policy);

/// Verifies, replay-checks and decrypts one framed envelope. `keys` changes only on success.
Opened open(ByteView frame, SessionKeys& keys, const TrustStore& trusted, const ChannelPolicy& policy);

// --- Handshake -----------------------------------------------------------
//
// HELLO     payload: robot eph pub (65) | robot static pub (65) | robot nonce (16)
// HELLO_ACK payload: server eph pub (65) | server static pub (65) | echoed robot nonce (16)
// Both travel as signed envelopes with seq 0 under the sender's static key.

inline constexpr std::size_t kHelloPayloadSize = 65 + 65 + 16;

class RobotHandshake {
 public:
  RobotHandshake(const StaticIdentity& identity, const crypto::PublicKey& pinned_server);
  Bytes hello() const;
  /// Verifies HELLO_ACK and derives the session keys.
  SessionKeys finish(ByteView hello_ack_frame) const;

 private:
  const StaticIdentity& identity_;
  crypto::PublicKey pinned_server_;
  crypto::KeyPair ephemeral_;
  std::array<std::uint8_t, 16> nonce_;
};

struct ServerAccept {
  SenderId robot_id{};
  crypto::PublicKey robot_static{};
  SessionKeys keys;
  Bytes hello_ack;
};

/// Server side: validates HELLO against the allowlist and builds HELLO_ACK.
ServerAccept accept_hello(ByteView hello_frame, const StaticIdentity& server, const TrustStore& allowlist);

// --- Key files -------------------------------------------------------------

/// Hex-armored, one value per line.
void write_private_key_file(const std::string& path, const crypto::PrivateKey& priv);
void write_public_key_file(const std::string& path, const crypto::PublicKey& pub);
crypto::PrivateKey read_private_key_file(const std::string& path);
/// Returns every public key in the file (allowlists hold one per line).
std::vector<crypto::PublicKey> read_public_key_file(const std::string& path);
crypto::PublicKey parse_public_key_hex(std::string_view hex);

class KeyFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sentinel::channel
