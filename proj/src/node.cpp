#include "miot/node.hpp"

#include <stdexcept>

namespace miot {

NodeAgent::NodeAgent(std::uint64_t id, const Params& params,
                     const ProvisioningDirectory& dir, DetRng& rng, Bytes app_image)
    : self_{EntityKind::Node, id},
      params_(params),
      dir_(dir),
      prov_(*[&]() {
        const NodeProvision* p = dir.node(id);
        if (!p) throw std::invalid_argument("node not provisioned");
        return p;
      }()),
      rng_(rng),
      app_image_(std::move(app_image)) {}

Outbox NodeAgent::initiate_join(double now, std::uint64_t edge_id) {
  (void)now;
  Outbox out;
  if (phase_ != Phase::Idle) {
    out.say("join_ignored", "not idle");
    return out;
  }
  // Uniform choice over the provisioned set; which key is presented is
  // not predictable from the node id alone.
  auto it = prov_.psks.begin();
  std::advance(it, static_cast<long>(rng_.pick(prov_.psks.size())));

  PendingJoin pend;
  pend.edge = edge_id;
  pend.psk_index = it->first;
  pend.psk = it->second;
  pending_ = pend;
  phase_ = Phase::Joining;

  NodeJoinBody body{pend.psk_index, pend.psk};
  Frame f = sealed_to_edge(MsgType::NodeJoinRequest, edge_id, dir_.domain_key,
                           encode_node_join(body));
  out.frames.push_back(std::move(f));
  out.say("join_started", "edge:" + std::to_string(edge_id));
  return out;
}

Outbox NodeAgent::handle_frame(double now, const Frame& f) {
  ++counters_.frames_received;
  switch (f.type) {
    case MsgType::Challenge: return on_challenge(now, f);
    case MsgType::AuthAck: return on_auth_ack(now, f);
    case MsgType::ConnectAck: return on_connect_ack(now, f);
    case MsgType::KeyRenew: return on_key_renew(now, f);
    case MsgType::Disconnect: return on_disconnect(now, f);
    case MsgType::Reject: return on_reject(now, f);
    default: {
      Outbox out;
      out.say("ignored", std::string(msg_type_name(f.type)) + " from " +
                             entity_label(f.sender));
      return out;
    }
  }
}

Outbox NodeAgent::on_challenge(double now, const Frame& f) {
  (void)now;
  Outbox out;
  if (phase_ != Phase::Joining || !pending_ ||
      f.sender != EntityRef{EntityKind::Edge, pending_->edge}) {
    out.say("ignored", "unexpected Challenge");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "Challenge seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, pending_->psk);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "Challenge");
    return out;
  }
  std::optional<ChallengeBody> body = decode_challenge(*opened.pt);
  if (!body) {
    out.say("ignored", "malformed Challenge body");
    return out;
  }
  floors_.accept(f.sender, f.seq);
  pending_->challenge = body->challenge;

  const ChallengeNonce responder = issuer_.issue(rng_);
  Frame resp = make_frame(MsgType::ChallengeResponse, self_, f.sender,
                          seq_.next(f.sender));
  resp.payload = meter_.solve(pending_->psk, body->challenge, prov_.fingerprint,
                              responder);
  pending_->candidate = meter_.derive(pending_->psk, body->challenge, responder);
  pending_->key_derived = true;
  phase_ = Phase::AwaitingAck;
  out.frames.push_back(std::move(resp));
  out.say("challenge_answered", "edge:" + std::to_string(pending_->edge));
  return out;
}

Outbox NodeAgent::on_auth_ack(double now, const Frame& f) {
  Outbox out;
  if (phase_ != Phase::AwaitingAck || !pending_ || !pending_->key_derived ||
      f.sender != EntityRef{EntityKind::Edge, pending_->edge}) {
    out.say("ignored", "unexpected AuthAck");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "AuthAck seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, pending_->candidate);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "AuthAck");
    return out;
  }
  std::optional<AuthAckBody> body = decode_auth_ack(*opened.pt);
  if (!body) {
    out.say("ignored", "malformed AuthAck body");
    return out;
  }
  floors_.accept(f.sender, f.seq);

  session_key_ = pending_->candidate;
  current_edge_ = pending_->edge;
  key_created_at_ = now;
  phase_ = Phase::Connected;
  ++counters_.full_auths;
  out.say("full_auth", "edge:" + std::to_string(*current_edge_));

  // The ack doubles as the digest request: answer it immediately so the
  // edge can activate the entry.
  ReconnectBody rb;
  rb.digest = code_signature();
  rb.fresh_nonce = issuer_.issue(rng_);
  out.frames.push_back(sealed_to_edge(MsgType::ReconnectRequest, *current_edge_,
                                      *session_key_, encode_reconnect(rb)));
  pending_.reset();
  return out;
}

Outbox NodeAgent::on_connect_ack(double now, const Frame& f) {
  (void)now;
  Outbox out;
  const bool reconnecting = phase_ == Phase::Reconnecting;
  const std::uint64_t expect_edge =
      reconnecting ? reconnect_target_.value_or(0) : current_edge_.value_or(0);
  if ((phase_ != Phase::Connected && phase_ != Phase::Reconnecting) ||
      f.sender != EntityRef{EntityKind::Edge, expect_edge} || !session_key_) {
    out.say("ignored", "unexpected ConnectAck");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "ConnectAck seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, *session_key_);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "ConnectAck");
    return out;
  }
  if (!decode_connect_ack(*opened.pt)) {
    out.say("ignored", "malformed ConnectAck body");
    return out;
  }
  floors_.accept(f.sender, f.seq);
  if (reconnecting) {
    current_edge_ = reconnect_target_;
    reconnect_target_.reset();
    phase_ = Phase::Connected;
    ++counters_.handoffs_completed;
    out.say("handoff_complete", "edge:" + std::to_string(*current_edge_));
  } else {
    out.say("connected", "edge:" + std::to_string(*current_edge_));
  }
  return out;
}

Outbox NodeAgent::on_key_renew(double now, const Frame& f) {
  Outbox out;
  if (phase_ != Phase::Connected || !session_key_ || !current_edge_ ||
      f.sender != EntityRef{EntityKind::Edge, *current_edge_}) {
    out.say("ignored", "unexpected KeyRenew");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "KeyRenew seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, *session_key_);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "KeyRenew");
    return out;
  }
  std::optional<KeyRenewBody> body = decode_key_renew(*opened.pt);
  if (!body) {
    out.say("ignored", "malformed KeyRenew body");
    return out;
  }
  floors_.accept(f.sender, f.seq);

  const ChallengeNonce responder = issuer_.issue(rng_);
  const SymmetricKey new_key = meter_.derive(*session_key_, body->renew_nonce, responder);
  session_key_ = new_key;
  key_created_at_ = now;

  // Confirm = responder nonce, then an empty seal under the new key with
  // the renew nonce; proves the same key was derived on this side.
  Frame confirm = make_frame(MsgType::KeyRenewConfirm, self_, f.sender,
                             seq_.next(f.sender));
  Bytes aad = header_aad(confirm);
  aad.insert(aad.end(), responder.begin(), responder.end());
  const Bytes sealed = meter_.seal(new_key, body->renew_nonce, aad, {});
  confirm.payload.assign(responder.begin(), responder.end());
  confirm.payload.insert(confirm.payload.end(), sealed.begin(), sealed.end());
  out.frames.push_back(std::move(confirm));
  out.say("key_renewed", "edge:" + std::to_string(*current_edge_));
  return out;
}

Outbox NodeAgent::on_disconnect(double now, const Frame& f) {
  Outbox out;
  if (phase_ != Phase::Connected || !session_key_ || !current_edge_ ||
      f.sender != EntityRef{EntityKind::Edge, *current_edge_}) {
    out.say("ignored", "unexpected Disconnect");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "Disconnect seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, *session_key_);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "Disconnect");
    return out;
  }
  std::optional<DisconnectBody> body = decode_disconnect(*opened.pt);
  if (!body) {
    out.say("ignored", "malformed Disconnect body");
    return out;
  }
  floors_.accept(f.sender, f.seq);

  if (body->directive == DisconnectBody::Directive::Migrate) {
    if (!body->target) {
      out.say("ignored", "migrate directive without target");
      return out;
    }
    reconnect_target_ = *body->target;
    phase_ = Phase::Reconnecting;
    out.say("migrating", "edge:" + std::to_string(*body->target));
    ReconnectBody rb;
    rb.digest = code_signature();
    rb.fresh_nonce = issuer_.issue(rng_);
    out.frames.push_back(sealed_to_edge(MsgType::ReconnectRequest, *body->target,
                                        *session_key_, encode_reconnect(rb)));
    return out;
  }

  drop_session();
  phase_ = Phase::Idle;
  if (body->target) {
    out.say("disconnected", "rejoin at edge:" + std::to_string(*body->target));
    Outbox join = initiate_join(now, *body->target);
    out.merge(std::move(join));
  } else {
    out.say("disconnected", "rejoin, no target");
  }
  return out;
}

Outbox NodeAgent::on_reject(double now, const Frame& f) {
  (void)now;
  Outbox out;
  std::optional<RejectBody> body;
  if (f.payload.size() == 1) {
    // Plaintext rejects exist only in the pre-session part of the
    // protocol; accepting them elsewhere would hand any bystander a
    // disconnect button.
    if (phase_ == Phase::Joining || phase_ == Phase::AwaitingAck ||
        phase_ == Phase::Reconnecting) {
      body = decode_reject(f.payload);
    }
  } else if (session_key_) {
    if (!floors_.fresh(f.sender, f.seq)) {
      ++counters_.replays_detected;
      out.say("replay_detected", "Reject seq " + std::to_string(f.seq));
      return out;
    }
    AeadOpenResult opened = meter_.open_frame(f, *session_key_);
    if (opened.ok()) {
      floors_.accept(f.sender, f.seq);
      body = decode_reject(*opened.pt);
    }
  }
  if (!body) {
    out.say("ignored", "Reject not accepted in this phase");
    return out;
  }
  out.say("rejected", reject_reason_name(body->reason));
  pending_.reset();
  drop_session();
  phase_ = Phase::Idle;
  return out;
}

Outbox NodeAgent::send_data(double now, ByteSpan payload) {
  (void)now;
  Outbox out;
  if (phase_ != Phase::Connected || !session_key_ || !current_edge_) {
    out.say("not_connected", "data send skipped");
    return out;
  }
  out.frames.push_back(
      sealed_to_edge(MsgType::DataFrame, *current_edge_, *session_key_, payload));
  return out;
}

Outbox NodeAgent::on_tick(double now) {
  (void)now;
  return {};
}

void NodeAgent::corrupt_app_image(std::size_t index) {
  if (app_image_.empty()) return;
  app_image_[index % app_image_.size()] ^= 0xff;
}

AppDigest NodeAgent::code_signature() { return meter_.hash(app_image_); }

Frame NodeAgent::sealed_to_edge(MsgType t, std::uint64_t edge, const SymmetricKey& key,
                                ByteSpan body) {
  EntityRef to{EntityKind::Edge, edge};
  Frame f = make_frame(t, self_, to, seq_.next(to));
  meter_.seal_frame(f, key, issuer_.issue(rng_), body);
  return f;
}

void NodeAgent::drop_session() {
  session_key_.reset();
  current_edge_.reset();
  reconnect_target_.reset();
}

}  // namespace miot
