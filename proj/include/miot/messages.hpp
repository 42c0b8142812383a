#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "miot/bytes.hpp"
#include "miot/crypto.hpp"
#include "miot/frame.hpp"

namespace miot {

// Typed bodies carried inside sealed frame payloads. Encoders append
// big-endian fields; decoders are strict and reject short or oversized
// input. Strings are u16 length prefixed.

struct NodeJoinBody {
  std::uint16_t psk_index = 0;
  SymmetricKey psk{};
};

struct EdgeAnnounce {
  std::string name;
  std::string address;
  double x = 0;
  double y = 0;
  std::uint32_t capacity = 0;
};

struct ServerJoinBody {
  std::uint16_t psk_index = 0;
  SymmetricKey psk{};
  EdgeAnnounce announce;
};

struct ChallengeBody {
  ChallengeNonce challenge{};
};

struct AuthAckBody {
  std::uint64_t edge_id = 0;
  // Server flavor: nonce pair the newcomer folds into the domain key to
  // obtain its name-server key.
  std::optional<std::pair<ChallengeNonce, ChallengeNonce>> ns_nonces;
};

struct NameRecordWire {
  std::uint64_t edge_id = 0;
  std::string name;
  std::string address;
  double x = 0;
  double y = 0;
  std::uint32_t capacity = 0;
  std::uint64_t authenticated_by = 0;
};

struct RegisterEdgeBody {
  NameRecordWire record;
  ChallengeNonce nonce_a{};
  ChallengeNonce nonce_b{};
};

struct RegisterAckBody {
  std::uint64_t edge_id = 0;
};

struct RecommendRequestBody {
  std::uint64_t node_id = 0;
  double x = 0;
  double y = 0;
  std::uint64_t exclude_edge = 0;
  std::uint32_t reporter_load = 0;
  bool want_ticket = false;
};

struct TicketGrant {
  ChallengeNonce n1{};
  ChallengeNonce n2{};
  SymmetricKey transfer_key{};
};

struct RecommendReplyBody {
  std::uint64_t node_id = 0;
  std::optional<std::uint64_t> recommended;
  std::optional<TicketGrant> ticket;
};

struct HandoffInner {
  std::uint64_t node_id = 0;
  SymmetricKey session_key{};
  AppDigest app_digest{};
  double ttl_remaining = 0;
};

struct HandoffAckBody {
  std::uint64_t node_id = 0;
};

struct ReconnectBody {
  AppDigest digest{};
  ChallengeNonce fresh_nonce{};
};

struct ConnectAckBody {
  std::uint64_t edge_id = 0;
};

struct KeyRenewBody {
  ChallengeNonce renew_nonce{};
};

struct DisconnectBody {
  enum class Directive : std::uint8_t { Rejoin = 0, Migrate = 1 };
  Directive directive = Directive::Rejoin;
  std::optional<std::uint64_t> target;
};

struct RejectBody {
  RejectReason reason = RejectReason::UnknownKey;
};

Bytes encode_node_join(const NodeJoinBody&);
std::optional<NodeJoinBody> decode_node_join(ByteSpan);

Bytes encode_server_join(const ServerJoinBody&);
std::optional<ServerJoinBody> decode_server_join(ByteSpan);

Bytes encode_challenge(const ChallengeBody&);
std::optional<ChallengeBody> decode_challenge(ByteSpan);

Bytes encode_auth_ack(const AuthAckBody&);
std::optional<AuthAckBody> decode_auth_ack(ByteSpan);

Bytes encode_register_edge(const RegisterEdgeBody&);
std::optional<RegisterEdgeBody> decode_register_edge(ByteSpan);

Bytes encode_register_ack(const RegisterAckBody&);
std::optional<RegisterAckBody> decode_register_ack(ByteSpan);

Bytes encode_recommend_request(const RecommendRequestBody&);
std::optional<RecommendRequestBody> decode_recommend_request(ByteSpan);

Bytes encode_recommend_reply(const RecommendReplyBody&);
std::optional<RecommendReplyBody> decode_recommend_reply(ByteSpan);

Bytes encode_handoff_inner(const HandoffInner&);
std::optional<HandoffInner> decode_handoff_inner(ByteSpan);

Bytes encode_handoff_ack(const HandoffAckBody&);
std::optional<HandoffAckBody> decode_handoff_ack(ByteSpan);

Bytes encode_reconnect(const ReconnectBody&);
std::optional<ReconnectBody> decode_reconnect(ByteSpan);

Bytes encode_connect_ack(const ConnectAckBody&);
std::optional<ConnectAckBody> decode_connect_ack(ByteSpan);

Bytes encode_key_renew(const KeyRenewBody&);
std::optional<KeyRenewBody> decode_key_renew(ByteSpan);

Bytes encode_disconnect(const DisconnectBody&);
std::optional<DisconnectBody> decode_disconnect(ByteSpan);

Bytes encode_reject(const RejectBody&);
std::optional<RejectBody> decode_reject(ByteSpan);

}  // namespace miot
