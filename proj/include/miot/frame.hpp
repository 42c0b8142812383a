#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <variant>

#include "miot/bytes.hpp"
#include "miot/crypto.hpp"

namespace miot {

enum class EntityKind : std::uint8_t { Node = 0, Edge = 1, NameServer = 2 };

enum class MsgType : std::uint8_t {
  NodeJoinRequest = 0x01,
  Challenge = 0x02,
  ChallengeResponse = 0x03,
  AuthAck = 0x04,
  ServerJoinRequest = 0x05,
  RegisterEdge = 0x06,
  RegisterAck = 0x07,
  RecommendRequest = 0x08,
  RecommendReply = 0x09,
  HandoffTransfer = 0x0a,
  HandoffAck = 0x0b,
  ReconnectRequest = 0x0c,
  ConnectAck = 0x0d,
  KeyRenew = 0x0e,
  KeyRenewConfirm = 0x0f,
  DataFrame = 0x10,
  Disconnect = 0x11,
  Reject = 0x12,
};

enum class RejectReason : std::uint8_t {
  UnknownKey = 0x01,
  ChallengeFailed = 0x02,
  Denylisted = 0x03,
  DigestMismatch = 0x04,
  ReplayDetected = 0x05,
  NotRegistered = 0x06,
  CapacityExceeded = 0x07,
};

struct EntityRef {
  EntityKind kind = EntityKind::Node;
  std::uint64_t id = 0;
  auto operator<=>(const EntityRef&) const = default;
};

inline constexpr EntityRef kNameServerRef{EntityKind::NameServer, 0};

struct Frame {
  MsgType type = MsgType::DataFrame;
  EntityRef sender;
  EntityRef receiver;
  std::uint32_t seq = 0;
  Bytes payload;
};

enum class DecodeError {
  truncated,
  bad_magic,
  bad_version,
  unknown_msg_type,
  bad_kind,
  trailing_bytes,
};

inline constexpr std::size_t kHeaderLen = 28;
inline constexpr std::size_t kAadLen = 26;
inline constexpr std::size_t kMaxPayload = 65535;

/// Header layout, all multi-byte fields big-endian:
///   magic 0xED 0x6E | version 0x01 | msg_type | sender_kind | sender_id
///   | receiver_kind | receiver_id | seq | payload_len
/// Throws std::length_error if the payload exceeds kMaxPayload.
Bytes encode_frame(const Frame& f);

std::variant<Frame, DecodeError> decode_frame(ByteSpan wire);

/// First kAadLen header bytes (everything up to payload_len). Sealed
/// bodies authenticate these, so type, addressing, and seq cannot be
/// swapped under a valid tag.
Bytes header_aad(const Frame& f);

/// Installs payload = nonce ∥ aead_seal(key, nonce, header_aad(f), body).
void seal_body(Frame& f, const SymmetricKey& key, const ChallengeNonce& nonce,
               ByteSpan body);

/// Recovers the body of a sealed payload. Fails on short payloads and
/// on any tag mismatch.
AeadOpenResult open_body(const Frame& f, const SymmetricKey& key);

const char* msg_type_name(MsgType t);
const char* kind_name(EntityKind k);
const char* reject_reason_name(RejectReason r);
std::string entity_label(EntityRef e);
const char* decode_error_name(DecodeError e);

}  // namespace miot
