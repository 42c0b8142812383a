#include "miot/frame.hpp"

#include <cstring>
#include <stdexcept>

namespace miot {
namespace {

constexpr std::uint8_t kMagic0 = 0xed;
constexpr std::uint8_t kMagic1 = 0x6e;
constexpr std::uint8_t kVersion = 0x01;

bool valid_msg_type(std::uint8_t t) {
  return t >= static_cast<std::uint8_t>(MsgType::NodeJoinRequest) &&
         t <= static_cast<std::uint8_t>(MsgType::Reject);
}

void append_header(Bytes& out, const Frame& f) {
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(f.type));
  out.push_back(static_cast<std::uint8_t>(f.sender.kind));
  put_u64(out, f.sender.id);
  out.push_back(static_cast<std::uint8_t>(f.receiver.kind));
  put_u64(out, f.receiver.id);
  put_u32(out, f.seq);
}

}  // namespace

Bytes encode_frame(const Frame& f) {
  if (f.payload.size() > kMaxPayload) {
    throw std::length_error("frame payload exceeds 65535 bytes");
  }
  Bytes out;
  out.reserve(kHeaderLen + f.payload.size());
  append_header(out, f);
  put_u16(out, static_cast<std::uint16_t>(f.payload.size()));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

std::variant<Frame, DecodeError> decode_frame(ByteSpan wire) {
  if (wire.size() < kHeaderLen) return DecodeError::truncated;
  if (wire[0] != kMagic0 || wire[1] != kMagic1) return DecodeError::bad_magic;
  if (wire[2] != kVersion) return DecodeError::bad_version;
  if (!valid_msg_type(wire[3])) return DecodeError::unknown_msg_type;
  std::uint8_t skind = wire[4];
  std::uint8_t rkind = wire[13];
  if (skind > 2 || rkind > 2) return DecodeError::bad_kind;

  ByteReader r(wire.subspan(5));
  Frame f;
  f.type = static_cast<MsgType>(wire[3]);
  f.sender.kind = static_cast<EntityKind>(skind);
  f.sender.id = r.u64();
  r.u8();  // receiver kind, validated above
  f.receiver.kind = static_cast<EntityKind>(rkind);
  f.receiver.id = r.u64();
  f.seq = r.u32();
  const std::uint16_t len = r.u16();
  if (wire.size() < kHeaderLen + len) return DecodeError::truncated;
  if (wire.size() > kHeaderLen + len) return DecodeError::trailing_bytes;
  f.payload = r.take(len);
  return f;
}

Bytes header_aad(const Frame& f) {
  Bytes out;
  out.reserve(kAadLen);
  append_header(out, f);
  return out;
}

void seal_body(Frame& f, const SymmetricKey& key, const ChallengeNonce& nonce,
               ByteSpan body) {
  f.payload.assign(nonce.begin(), nonce.end());
  Bytes sealed = aead_seal(key, nonce, header_aad(f), body);
  f.payload.insert(f.payload.end(), sealed.begin(), sealed.end());
}

AeadOpenResult open_body(const Frame& f, const SymmetricKey& key) {
  if (f.payload.size() < kNonceLen + kTagLen) {
    return {std::nullopt, AeadError::length_error};
  }
  ChallengeNonce nonce;
  std::memcpy(nonce.data(), f.payload.data(), kNonceLen);
  return aead_open(key, nonce, header_aad(f),
                   ByteSpan(f.payload).subspan(kNonceLen));
}

const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::NodeJoinRequest: return "NodeJoinRequest";
    case MsgType::Challenge: return "Challenge";
    case MsgType::ChallengeResponse: return "ChallengeResponse";
    case MsgType::AuthAck: return "AuthAck";
    case MsgType::ServerJoinRequest: return "ServerJoinRequest";
    case MsgType::RegisterEdge: return "RegisterEdge";
    case MsgType::RegisterAck: return "RegisterAck";
    case MsgType::RecommendRequest: return "RecommendRequest";
    case MsgType::RecommendReply: return "RecommendReply";
    case MsgType::HandoffTransfer: return "HandoffTransfer";
    case MsgType::HandoffAck: return "HandoffAck";
    case MsgType::ReconnectRequest: return "ReconnectRequest";
    case MsgType::ConnectAck: return "ConnectAck";
    case MsgType::KeyRenew: return "KeyRenew";
    case MsgType::KeyRenewConfirm: return "KeyRenewConfirm";
    case MsgType::DataFrame: return "DataFrame";
    case MsgType::Disconnect: return "Disconnect";
    case MsgType::Reject: return "Reject";
  }
  return "Unknown";
}

const char* kind_name(EntityKind k) {
  switch (k) {
    case EntityKind::Node: return "node";
    case EntityKind::Edge: return "edge";
    case EntityKind::NameServer: return "ns";
  }
  return "?";
}

const char* reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::UnknownKey: return "UnknownKey";
    case RejectReason::ChallengeFailed: return "ChallengeFailed";
    case RejectReason::Denylisted: return "Denylisted";
    case RejectReason::DigestMismatch: return "DigestMismatch";
    case RejectReason::ReplayDetected: return "ReplayDetected";
    case RejectReason::NotRegistered: return "NotRegistered";
    case RejectReason::CapacityExceeded: return "CapacityExceeded";
  }
  return "Unknown";
}

std::string entity_label(EntityRef e) {
  return std::string(kind_name(e.kind)) + ":" + std::to_string(e.id);
}

const char* decode_error_name(DecodeError e) {
  switch (e) {
    case DecodeError::truncated: return "truncated";
    case DecodeError::bad_magic: return "bad_magic";
    case DecodeError::bad_version: return "bad_version";
    case DecodeError::unknown_msg_type: return "unknown_msg_type";
    case DecodeError::bad_kind: return "bad_kind";
    case DecodeError::trailing_bytes: return "trailing_bytes";
  }
  return "?";
}

}  // namespace miot
