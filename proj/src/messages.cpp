#include "miot/messages.hpp"

namespace miot {
namespace {

void put_str(Bytes& out, const std::string& s) {
  put_u16(out, static_cast<std::uint16_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

std::string take_str(ByteReader& r) {
  const std::uint16_t len = r.u16();
  const Bytes raw = r.take(len);
  return std::string(raw.begin(), raw.end());
}

template <std::size_t N>
void put_arr(Bytes& out, const std::array<std::uint8_t, N>& a) {
  out.insert(out.end(), a.begin(), a.end());
}

// Decode succeeded only if every byte was consumed and no read ran short.
bool done(const ByteReader& r) { return r.ok() && r.exhausted(); }

}  // namespace

Bytes encode_node_join(const NodeJoinBody& b) {
  Bytes out;
  put_u16(out, b.psk_index);
  put_arr(out, b.psk);
  return out;
}

std::optional<NodeJoinBody> decode_node_join(ByteSpan in) {
  ByteReader r(in);
  NodeJoinBody b;
  b.psk_index = r.u16();
  b.psk = r.take_array<kKeyLen>();
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_server_join(const ServerJoinBody& b) {
  Bytes out;
  put_u16(out, b.psk_index);
  put_arr(out, b.psk);
  put_str(out, b.announce.name);
  put_str(out, b.announce.address);
  put_f64(out, b.announce.x);
  put_f64(out, b.announce.y);
  put_u32(out, b.announce.capacity);
  return out;
}

std::optional<ServerJoinBody> decode_server_join(ByteSpan in) {
  ByteReader r(in);
  ServerJoinBody b;
  b.psk_index = r.u16();
  b.psk = r.take_array<kKeyLen>();
  b.announce.name = take_str(r);
  b.announce.address = take_str(r);
  b.announce.x = r.f64();
  b.announce.y = r.f64();
  b.announce.capacity = r.u32();
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_challenge(const ChallengeBody& b) {
  Bytes out;
  put_arr(out, b.challenge);
  return out;
}

std::optional<ChallengeBody> decode_challenge(ByteSpan in) {
  ByteReader r(in);
  ChallengeBody b;
  b.challenge = r.take_array<kNonceLen>();
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_auth_ack(const AuthAckBody& b) {
  Bytes out;
  put_u64(out, b.edge_id);
  out.push_back(b.ns_nonces ? 1 : 0);
  if (b.ns_nonces) {
    put_arr(out, b.ns_nonces->first);
    put_arr(out, b.ns_nonces->second);
  }
  return out;
}

std::optional<AuthAckBody> decode_auth_ack(ByteSpan in) {
  ByteReader r(in);
  AuthAckBody b;
  b.edge_id = r.u64();
  const std::uint8_t flag = r.u8();
  if (flag > 1) return std::nullopt;
  if (flag == 1) {
    auto a = r.take_array<kNonceLen>();
    auto c = r.take_array<kNonceLen>();
    b.ns_nonces = {a, c};
  }
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_register_edge(const RegisterEdgeBody& b) {
  Bytes out;
  put_u64(out, b.record.edge_id);
  put_str(out, b.record.name);
  put_str(out, b.record.address);
  put_f64(out, b.record.x);
  put_f64(out, b.record.y);
  put_u32(out, b.record.capacity);
  put_u64(out, b.record.authenticated_by);
  put_arr(out, b.nonce_a);
  put_arr(out, b.nonce_b);
  return out;
}

std::optional<RegisterEdgeBody> decode_register_edge(ByteSpan in) {
  ByteReader r(in);
  RegisterEdgeBody b;
  b.record.edge_id = r.u64();
  b.record.name = take_str(r);
  b.record.address = take_str(r);
  b.record.x = r.f64();
  b.record.y = r.f64();
  b.record.capacity = r.u32();
  b.record.authenticated_by = r.u64();
  b.nonce_a = r.take_array<kNonceLen>();
  b.nonce_b = r.take_array<kNonceLen>();
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_register_ack(const RegisterAckBody& b) {
  Bytes out;
  put_u64(out, b.edge_id);
  return out;
}

std::optional<RegisterAckBody> decode_register_ack(ByteSpan in) {
  ByteReader r(in);
  RegisterAckBody b;
  b.edge_id = r.u64();
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_recommend_request(const RecommendRequestBody& b) {
  Bytes out;
  put_u64(out, b.node_id);
  put_f64(out, b.x);
  put_f64(out, b.y);
  put_u64(out, b.exclude_edge);
  put_u32(out, b.reporter_load);
  out.push_back(b.want_ticket ? 1 : 0);
  return out;
}

std::optional<RecommendRequestBody> decode_recommend_request(ByteSpan in) {
  ByteReader r(in);
  RecommendRequestBody b;
  b.node_id = r.u64();
  b.x = r.f64();
  b.y = r.f64();
  b.exclude_edge = r.u64();
  b.reporter_load = r.u32();
  const std::uint8_t flag = r.u8();
  if (flag > 1) return std::nullopt;
  b.want_ticket = flag == 1;
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_recommend_reply(const RecommendReplyBody& b) {
  Bytes out;
  put_u64(out, b.node_id);
  out.push_back(b.recommended ? 1 : 0);
  if (b.recommended) put_u64(out, *b.recommended);
  out.push_back(b.ticket ? 1 : 0);
  if (b.ticket) {
    put_arr(out, b.ticket->n1);
    put_arr(out, b.ticket->n2);
    put_arr(out, b.ticket->transfer_key);
  }
  return out;
}

std::optional<RecommendReplyBody> decode_recommend_reply(ByteSpan in) {
  ByteReader r(in);
  RecommendReplyBody b;
  b.node_id = r.u64();
  const std::uint8_t has_rec = r.u8();
  if (has_rec > 1) return std::nullopt;
  if (has_rec == 1) b.recommended = r.u64();
  const std::uint8_t has_ticket = r.u8();
  if (has_ticket > 1) return std::nullopt;
  if (has_ticket == 1) {
    TicketGrant t;
    t.n1 = r.take_array<kNonceLen>();
    t.n2 = r.take_array<kNonceLen>();
    t.transfer_key = r.take_array<kKeyLen>();
    b.ticket = t;
  }
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_handoff_inner(const HandoffInner& b) {
  Bytes out;
  put_u64(out, b.node_id);
  put_arr(out, b.session_key);
  put_arr(out, b.app_digest);
  put_f64(out, b.ttl_remaining);
  return out;
}

std::optional<HandoffInner> decode_handoff_inner(ByteSpan in) {
  ByteReader r(in);
  HandoffInner b;
  b.node_id = r.u64();
  b.session_key = r.take_array<kKeyLen>();
  b.app_digest = r.take_array<kDigestLen>();
  b.ttl_remaining = r.f64();
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_handoff_ack(const HandoffAckBody& b) {
  Bytes out;
  put_u64(out, b.node_id);
  return out;
}

std::optional<HandoffAckBody> decode_handoff_ack(ByteSpan in) {
  ByteReader r(in);
  HandoffAckBody b;
  b.node_id = r.u64();
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_reconnect(const ReconnectBody& b) {
  Bytes out;
  put_arr(out, b.digest);
  put_arr(out, b.fresh_nonce);
  return out;
}

std::optional<ReconnectBody> decode_reconnect(ByteSpan in) {
  ByteReader r(in);
  ReconnectBody b;
  b.digest = r.take_array<kDigestLen>();
  b.fresh_nonce = r.take_array<kNonceLen>();
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_connect_ack(const ConnectAckBody& b) {
  Bytes out;
  put_u64(out, b.edge_id);
  return out;
}

std::optional<ConnectAckBody> decode_connect_ack(ByteSpan in) {
  ByteReader r(in);
  ConnectAckBody b;
  b.edge_id = r.u64();
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_key_renew(const KeyRenewBody& b) {
  Bytes out;
  put_arr(out, b.renew_nonce);
  return out;
}

std::optional<KeyRenewBody> decode_key_renew(ByteSpan in) {
  ByteReader r(in);
  KeyRenewBody b;
  b.renew_nonce = r.take_array<kNonceLen>();
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_disconnect(const DisconnectBody& b) {
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(b.directive));
  out.push_back(b.target ? 1 : 0);
  if (b.target) put_u64(out, *b.target);
  return out;
}

std::optional<DisconnectBody> decode_disconnect(ByteSpan in) {
  ByteReader r(in);
  DisconnectBody b;
  const std::uint8_t d = r.u8();
  if (d > 1) return std::nullopt;
  b.directive = static_cast<DisconnectBody::Directive>(d);
  const std::uint8_t has_target = r.u8();
  if (has_target > 1) return std::nullopt;
  if (has_target == 1) b.target = r.u64();
  if (!done(r)) return std::nullopt;
  return b;
}

Bytes encode_reject(const RejectBody& b) {
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(b.reason));
  return out;
}

std::optional<RejectBody> decode_reject(ByteSpan in) {
  ByteReader r(in);
  RejectBody b;
  const std::uint8_t reason = r.u8();
  if (reason < 0x01 || reason > 0x07) return std::nullopt;
  b.reason = static_cast<RejectReason>(reason);
  if (!done(r)) return std::nullopt;
  return b;
}

}  // namespace miot
