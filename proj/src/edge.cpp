#include "miot/edge.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace miot {

namespace {

std::string node_tag(std::uint64_t id) { return "node:" + std::to_string(id); }
std::string edge_tag(std::uint64_t id) { return "edge:" + std::to_string(id); }

}  // namespace

EdgeServer::EdgeServer(std::uint64_t id, const Params& params, Mode mode,
                       const ProvisioningDirectory& dir, DetRng& rng,
                       std::string name, std::string address, double x, double y,
                       std::uint32_t capacity)
    : self_{EntityKind::Edge, id},
      params_(params),
      mode_(mode),
      dir_(dir),
      prov_(*[&]() {
        const EdgeProvision* p = dir.edge(id);
        if (!p) throw std::invalid_argument("edge not provisioned");
        return p;
      }()),
      rng_(rng),
      name_(std::move(name)),
      address_(std::move(address)),
      x_(x),
      y_(y),
      capacity_(capacity) {}

void EdgeServer::bootstrap_registered(const SymmetricKey& ns_key) {
  ns_key_ = ns_key;
  registered_ = true;
}

const EdgeServer::CacheEntry* EdgeServer::entry(std::uint64_t node_id) const {
  auto it = cache_.find(node_id);
  return it == cache_.end() ? nullptr : &it->second;
}

Outbox EdgeServer::initiate_register(double now, std::uint64_t via_edge) {
  (void)now;
  Outbox out;
  if (registered_ || reg_pending_) {
    out.say("register_ignored", "already registered or in progress");
    return out;
  }
  auto it = prov_.psks.begin();
  std::advance(it, static_cast<long>(rng_.pick(prov_.psks.size())));

  RegPending pend;
  pend.via_edge = via_edge;
  pend.psk_index = it->first;
  pend.psk = it->second;
  reg_pending_ = pend;

  ServerJoinBody body;
  body.psk_index = pend.psk_index;
  body.psk = pend.psk;
  body.announce = EdgeAnnounce{name_, address_, x_, y_, capacity_};
  out.frames.push_back(sealed_frame(MsgType::ServerJoinRequest,
                                    EntityRef{EntityKind::Edge, via_edge},
                                    dir_.domain_key, encode_server_join(body)));
  out.say("register_started", "via " + edge_tag(via_edge));
  return out;
}

Outbox EdgeServer::initiate_handoff(double now, std::uint64_t node_id,
                                    double node_x, double node_y) {
  Outbox out;
  if (!registered_ || !ns_key_) {
    out.say("handoff_ignored", "not registered");
    return out;
  }
  auto it = cache_.find(node_id);
  if (it == cache_.end() || !it->second.active || it->second.shared) {
    out.say("handoff_ignored", "no live entry for " + node_tag(node_id));
    return out;
  }
  if (it->second.renew_pending) {
    // The node may already hold the next key; shipping the old one would
    // strand it at the target.
    out.say("handoff_ignored", "renewal in flight for " + node_tag(node_id));
    return out;
  }
  if (pending_reco_.count(node_id) || pending_handoff_.count(node_id)) {
    out.say("handoff_ignored", "already in progress for " + node_tag(node_id));
    return out;
  }
  RecommendRequestBody req;
  req.node_id = node_id;
  req.x = node_x;
  req.y = node_y;
  req.exclude_edge = self_.id;
  req.reporter_load = static_cast<std::uint32_t>(cache_.size());
  req.want_ticket = mode_ == Mode::Migration;
  out.frames.push_back(sealed_frame(MsgType::RecommendRequest, kNameServerRef,
                                    *ns_key_, encode_recommend_request(req)));
  pending_reco_[node_id] =
      now + params_.renew_timeout_ticks * params_.tick_interval;
  out.say("recommend_requested", node_tag(node_id));
  return out;
}

Outbox EdgeServer::handle_frame(double now, const Frame& f) {
  ++counters_.frames_received;
  Outbox out;
  if (denylist_.count(f.sender)) {
    out.say("denylisted_drop", entity_label(f.sender));
    return out;
  }
  switch (f.type) {
    case MsgType::NodeJoinRequest: return on_node_join(now, f);
    case MsgType::ServerJoinRequest: return on_server_join(now, f);
    case MsgType::ChallengeResponse: return on_challenge_response(now, f);
    case MsgType::Challenge: return on_reg_challenge(now, f);
    case MsgType::AuthAck: return on_reg_auth_ack(now, f);
    case MsgType::RegisterAck: return on_register_ack(now, f);
    case MsgType::RecommendReply: return on_recommend_reply(now, f);
    case MsgType::HandoffTransfer: return on_handoff_transfer(now, f);
    case MsgType::HandoffAck: return on_handoff_ack(now, f);
    case MsgType::ReconnectRequest: return on_reconnect(now, f);
    case MsgType::DataFrame: return on_data(now, f);
    case MsgType::KeyRenewConfirm: return on_key_renew_confirm(now, f);
    case MsgType::Reject: return on_reject_frame(now, f);
    default:
      out.say("ignored", std::string(msg_type_name(f.type)) + " from " +
                             entity_label(f.sender));
      return out;
  }
}

Outbox EdgeServer::on_node_join(double now, const Frame& f) {
  Outbox out;
  if (f.sender.kind != EntityKind::Node) {
    out.say("ignored", "join with wrong sender kind");
    return out;
  }
  if (!registered_) {
    out.say("refused_unregistered", entity_label(f.sender));
    out.frames.push_back(plain_reject(f.sender, RejectReason::NotRegistered));
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "NodeJoinRequest seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, dir_.domain_key);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "NodeJoinRequest");
    return out;
  }
  std::optional<NodeJoinBody> body = decode_node_join(*opened.pt);
  if (!body) {
    out.say("ignored", "malformed NodeJoinRequest body");
    return out;
  }
  floors_.accept(f.sender, f.seq);

  const SymmetricKey* expected = dir_.psk(f.sender, body->psk_index);
  if (!expected || !ct_equal(ByteSpan(expected->data(), expected->size()),
                             ByteSpan(body->psk.data(), body->psk.size()))) {
    out.say("join_refused", "unknown key from " + entity_label(f.sender));
    out.frames.push_back(strike(f.sender, RejectReason::UnknownKey, false, out));
    return out;
  }

  if (cache_.count(f.sender.id)) {
    // A fresh authentication supersedes whatever session state is left.
    erase_entry(f.sender.id);
    pending_reco_.erase(f.sender.id);
    pending_handoff_.erase(f.sender.id);
    stashed_reconnects_.erase(f.sender.id);
    out.say("superseded", node_tag(f.sender.id));
  }
  if (cache_.size() >= capacity_) {
    out.say("capacity_exceeded", entity_label(f.sender));
    out.frames.push_back(plain_reject(f.sender, RejectReason::CapacityExceeded));
    return out;
  }

  PendingChallenge pend;
  pend.challenge = issuer_.issue(rng_);
  pend.psk_index = body->psk_index;
  pend.psk = body->psk;
  pend.server_flavor = false;
  pend.issued_at = now;
  pending_challenges_[f.sender] = pend;
  ++counters_.challenges_issued;

  ChallengeBody cb{pend.challenge};
  out.frames.push_back(
      sealed_frame(MsgType::Challenge, f.sender, pend.psk, encode_challenge(cb)));
  out.say("challenge_issued", entity_label(f.sender));
  return out;
}

Outbox EdgeServer::on_server_join(double now, const Frame& f) {
  Outbox out;
  if (f.sender.kind != EntityKind::Edge) {
    out.say("ignored", "server join with wrong sender kind");
    return out;
  }
  if (!registered_) {
    out.say("refused_unregistered", entity_label(f.sender));
    out.frames.push_back(plain_reject(f.sender, RejectReason::NotRegistered));
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "ServerJoinRequest seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, dir_.domain_key);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "ServerJoinRequest");
    return out;
  }
  std::optional<ServerJoinBody> body = decode_server_join(*opened.pt);
  if (!body) {
    out.say("ignored", "malformed ServerJoinRequest body");
    return out;
  }
  floors_.accept(f.sender, f.seq);

  const SymmetricKey* expected = dir_.psk(f.sender, body->psk_index);
  if (!expected || !ct_equal(ByteSpan(expected->data(), expected->size()),
                             ByteSpan(body->psk.data(), body->psk.size()))) {
    out.say("join_refused", "unknown key from " + entity_label(f.sender));
    out.frames.push_back(strike(f.sender, RejectReason::UnknownKey, true, out));
    return out;
  }

  PendingChallenge pend;
  pend.challenge = issuer_.issue(rng_);
  pend.psk_index = body->psk_index;
  pend.psk = body->psk;
  pend.server_flavor = true;
  pend.announce = body->announce;
  pend.issued_at = now;
  pending_challenges_[f.sender] = pend;
  ++counters_.challenges_issued;

  ChallengeBody cb{pend.challenge};
  out.frames.push_back(
      sealed_frame(MsgType::Challenge, f.sender, pend.psk, encode_challenge(cb)));
  out.say("challenge_issued", entity_label(f.sender));
  return out;
}

Outbox EdgeServer::on_challenge_response(double now, const Frame& f) {
  Outbox out;
  auto pit = pending_challenges_.find(f.sender);
  if (pit == pending_challenges_.end()) {
    out.say("ignored", "response without challenge from " + entity_label(f.sender));
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "ChallengeResponse seq " + std::to_string(f.seq));
    return out;
  }
  PendingChallenge pend = pit->second;
  const DeviceFingerprint* fp = dir_.fingerprint(f.sender);
  std::optional<ChallengeNonce> responder;
  if (fp) {
    responder = meter_.verify(pend.psk, pend.challenge, *fp, f.payload);
  }
  if (!responder) {
    pending_challenges_.erase(pit);
    out.say("auth_failed", entity_label(f.sender));
    out.frames.push_back(
        strike(f.sender, RejectReason::ChallengeFailed, pend.server_flavor, out));
    return out;
  }
  floors_.accept(f.sender, f.seq);
  pending_challenges_.erase(pit);
  const SymmetricKey candidate = meter_.derive(pend.psk, pend.challenge, *responder);

  if (!pend.server_flavor) {
    if (cache_.size() >= capacity_) {
      // Authentication succeeded but admission failed; the ceremony is
      // not counted, matching the absence of an auth note.
      out.say("capacity_exceeded", entity_label(f.sender));
      out.frames.push_back(plain_reject(f.sender, RejectReason::CapacityExceeded));
      return out;
    }
    ++counters_.full_auths;
    const NodeProvision* np = dir_.node(f.sender.id);
    CacheEntry e;
    e.node_id = f.sender.id;
    e.session_key = candidate;
    e.app_digest = np->approved_digest;
    e.created_at = now;
    e.last_renewed = now;
    e.ttl = params_.session_ttl;
    e.origin = CacheEntry::Origin::Local;
    cache_[f.sender.id] = e;
    sync_gauges();

    AuthAckBody ack{self_.id, std::nullopt};
    out.frames.push_back(
        sealed_frame(MsgType::AuthAck, f.sender, candidate, encode_auth_ack(ack)));
    out.say("auth_ok", entity_label(f.sender));
    return out;
  }

  // Registrar path: introduce the newcomer to the name server and hand it
  // the nonce pair its name-server key is derived from.
  ++counters_.full_auths;
  const ChallengeNonce nonce_a = issuer_.issue(rng_);
  const ChallengeNonce nonce_b = issuer_.issue(rng_);
  RegisterEdgeBody reg;
  reg.record.edge_id = f.sender.id;
  reg.record.name = pend.announce->name;
  reg.record.address = pend.announce->address;
  reg.record.x = pend.announce->x;
  reg.record.y = pend.announce->y;
  reg.record.capacity = pend.announce->capacity;
  reg.record.authenticated_by = self_.id;
  reg.nonce_a = nonce_a;
  reg.nonce_b = nonce_b;
  out.frames.push_back(sealed_frame(MsgType::RegisterEdge, kNameServerRef,
                                    *ns_key_, encode_register_edge(reg)));

  AuthAckBody ack{self_.id, std::make_pair(nonce_a, nonce_b)};
  out.frames.push_back(
      sealed_frame(MsgType::AuthAck, f.sender, candidate, encode_auth_ack(ack)));
  out.say("auth_ok", entity_label(f.sender));
  return out;
}

Outbox EdgeServer::on_reg_challenge(double now, const Frame& f) {
  (void)now;
  Outbox out;
  if (!reg_pending_ ||
      f.sender != EntityRef{EntityKind::Edge, reg_pending_->via_edge}) {
    out.say("ignored", "unexpected Challenge");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "Challenge seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, reg_pending_->psk);
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

  const ChallengeNonce responder = issuer_.issue(rng_);
  Frame resp = make_frame(MsgType::ChallengeResponse, self_, f.sender,
                          seq_.next(f.sender));
  resp.payload = meter_.solve(reg_pending_->psk, body->challenge,
                              prov_.fingerprint, responder);
  reg_pending_->candidate =
      meter_.derive(reg_pending_->psk, body->challenge, responder);
  reg_pending_->key_derived = true;
  out.frames.push_back(std::move(resp));
  out.say("challenge_answered", "via " + edge_tag(reg_pending_->via_edge));
  return out;
}

Outbox EdgeServer::on_reg_auth_ack(double now, const Frame& f) {
  (void)now;
  Outbox out;
  if (!reg_pending_ || !reg_pending_->key_derived ||
      f.sender != EntityRef{EntityKind::Edge, reg_pending_->via_edge}) {
    out.say("ignored", "unexpected AuthAck");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "AuthAck seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, reg_pending_->candidate);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "AuthAck");
    return out;
  }
  std::optional<AuthAckBody> body = decode_auth_ack(*opened.pt);
  if (!body || !body->ns_nonces) {
    out.say("ignored", "AuthAck without registration nonces");
    return out;
  }
  floors_.accept(f.sender, f.seq);

  ns_key_ = meter_.derive(dir_.domain_key, body->ns_nonces->first,
                          body->ns_nonces->second);
  registered_ = true;
  ++counters_.full_auths;
  out.say("full_auth", "via " + edge_tag(reg_pending_->via_edge));
  out.say("registered", "name-server key derived");
  reg_pending_.reset();
  return out;
}

Outbox EdgeServer::on_register_ack(double now, const Frame& f) {
  (void)now;
  Outbox out;
  if (f.sender != kNameServerRef) {
    out.say("ignored", "RegisterAck not from name server");
    return out;
  }
  if (!ns_key_) {
    // Can arrive before the registrar's AuthAck on a fast link; nothing
    // to assess it with yet.
    out.say("ignored", "RegisterAck before key material");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "RegisterAck seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, *ns_key_);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "RegisterAck");
    return out;
  }
  std::optional<RegisterAckBody> body = decode_register_ack(*opened.pt);
  if (!body) {
    out.say("ignored", "malformed RegisterAck body");
    return out;
  }
  floors_.accept(f.sender, f.seq);
  if (body->edge_id == self_.id) {
    out.say("register_confirmed", "");
  } else {
    out.say("register_forwarded", edge_tag(body->edge_id));
  }
  return out;
}

Outbox EdgeServer::on_recommend_reply(double now, const Frame& f) {
  Outbox out;
  if (f.sender != kNameServerRef || !ns_key_) {
    out.say("ignored", "RecommendReply not from name server");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "RecommendReply seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, *ns_key_);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "RecommendReply");
    return out;
  }
  std::optional<RecommendReplyBody> body = decode_recommend_reply(*opened.pt);
  if (!body) {
    out.say("ignored", "malformed RecommendReply body");
    return out;
  }
  floors_.accept(f.sender, f.seq);

  if (!pending_reco_.erase(body->node_id)) {
    out.say("ignored", "unsolicited recommendation for " + node_tag(body->node_id));
    return out;
  }
  auto it = cache_.find(body->node_id);
  if (it == cache_.end() || !it->second.active || it->second.shared ||
      it->second.renew_pending) {
    out.say("ignored", "no live entry for " + node_tag(body->node_id));
    return out;
  }
  if (!body->recommended || *body->recommended == self_.id) {
    out.say("recommend_none", node_tag(body->node_id));
    return out;
  }
  CacheEntry& e = it->second;
  const std::uint64_t target = *body->recommended;
  const EntityRef node_ref{EntityKind::Node, body->node_id};
  const EntityRef target_ref{EntityKind::Edge, target};

  if (mode_ == Mode::BaselineReauth) {
    DisconnectBody d;
    d.directive = DisconnectBody::Directive::Rejoin;
    d.target = target;
    out.frames.push_back(sealed_frame(MsgType::Disconnect, node_ref,
                                      e.session_key, encode_disconnect(d)));
    erase_entry(body->node_id);
    out.say("baseline_rejoin", node_tag(body->node_id) + " -> " + edge_tag(target));
    return out;
  }

  if (!body->ticket) {
    out.say("ignored", "recommendation without transfer ticket");
    return out;
  }
  HandoffInner inner;
  inner.node_id = e.node_id;
  inner.session_key = e.session_key;
  inner.app_digest = e.app_digest;
  inner.ttl_remaining = std::max(0.0, e.last_renewed + e.ttl - now);

  Frame xfer = make_frame(MsgType::HandoffTransfer, self_, target_ref,
                          seq_.next(target_ref));
  const ChallengeNonce nonce = issuer_.issue(rng_);
  const Bytes ct = meter_.seal(body->ticket->transfer_key, nonce,
                               header_aad(xfer), encode_handoff_inner(inner));
  xfer.payload.assign(body->ticket->n1.begin(), body->ticket->n1.end());
  xfer.payload.insert(xfer.payload.end(), body->ticket->n2.begin(),
                      body->ticket->n2.end());
  xfer.payload.insert(xfer.payload.end(), nonce.begin(), nonce.end());
  xfer.payload.insert(xfer.payload.end(), ct.begin(), ct.end());
  out.frames.push_back(std::move(xfer));

  e.shared = true;
  PendingHandoff ph;
  ph.target = target;
  ph.transfer_key = body->ticket->transfer_key;
  ph.deadline = now + params_.renew_timeout_ticks * params_.tick_interval;
  pending_handoff_[e.node_id] = ph;

  DisconnectBody d;
  d.directive = DisconnectBody::Directive::Migrate;
  d.target = target;
  out.frames.push_back(sealed_frame(MsgType::Disconnect, node_ref, e.session_key,
                                    encode_disconnect(d)));
  out.say("handoff_started", node_tag(e.node_id) + " -> " + edge_tag(target));
  return out;
}

Outbox EdgeServer::on_handoff_transfer(double now, const Frame& f) {
  Outbox out;
  if (f.sender.kind != EntityKind::Edge) {
    out.say("ignored", "transfer with wrong sender kind");
    return out;
  }
  if (!registered_ || !ns_key_) {
    out.say("ignored", "transfer while unregistered");
    return out;
  }
  constexpr std::size_t kMin = kNonceLen * 3 + kTagLen;
  if (f.payload.size() < kMin) {
    out.say("ignored", "short transfer payload");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "HandoffTransfer seq " + std::to_string(f.seq));
    return out;
  }
  ChallengeNonce n1{};
  ChallengeNonce n2{};
  ChallengeNonce nonce{};
  std::copy_n(f.payload.begin(), kNonceLen, n1.begin());
  std::copy_n(f.payload.begin() + kNonceLen, kNonceLen, n2.begin());
  std::copy_n(f.payload.begin() + 2 * kNonceLen, kNonceLen, nonce.begin());
  Bytes ticket_id(f.payload.begin(), f.payload.begin() + 2 * kNonceLen);
  if (used_tickets_.count(ticket_id)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "transfer ticket reused");
    return out;
  }
  const SymmetricKey k_ab = meter_.derive(*ns_key_, n1, n2);
  AeadOpenResult opened =
      meter_.open(k_ab, nonce, header_aad(f),
                  ByteSpan(f.payload.data() + 3 * kNonceLen,
                           f.payload.size() - 3 * kNonceLen));
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "HandoffTransfer");
    return out;
  }
  std::optional<HandoffInner> inner = decode_handoff_inner(*opened.pt);
  if (!inner) {
    out.say("ignored", "malformed transfer body");
    return out;
  }
  floors_.accept(f.sender, f.seq);
  used_tickets_.insert(std::move(ticket_id));

  if (cache_.count(inner->node_id)) {
    erase_entry(inner->node_id);
    out.say("superseded", node_tag(inner->node_id));
  }
  if (cache_.size() >= capacity_) {
    out.say("capacity_exceeded", node_tag(inner->node_id));
    ++counters_.rejects_sent;
    Frame rej = make_frame(MsgType::Reject, self_, f.sender, seq_.next(f.sender));
    meter_.seal_frame(rej, k_ab, issuer_.issue(rng_),
                      encode_reject({RejectReason::CapacityExceeded}));
    out.frames.push_back(std::move(rej));
    return out;
  }

  CacheEntry e;
  e.node_id = inner->node_id;
  e.session_key = inner->session_key;
  e.app_digest = inner->app_digest;
  e.created_at = now;
  e.ttl = params_.session_ttl;
  // Backdate so the transferred key keeps only its remaining lifetime.
  const double remaining =
      std::clamp(inner->ttl_remaining, 0.0, params_.session_ttl);
  e.last_renewed = now + remaining - e.ttl;
  e.origin = CacheEntry::Origin::Migrated;
  cache_[e.node_id] = e;
  sync_gauges();

  HandoffAckBody ack{inner->node_id};
  Frame af = make_frame(MsgType::HandoffAck, self_, f.sender, seq_.next(f.sender));
  meter_.seal_frame(af, k_ab, issuer_.issue(rng_), encode_handoff_ack(ack));
  out.frames.push_back(std::move(af));
  out.say("transfer_accepted",
          node_tag(inner->node_id) + " from " + entity_label(f.sender));

  auto sit = stashed_reconnects_.find(inner->node_id);
  if (sit != stashed_reconnects_.end()) {
    Frame stashed = std::move(sit->second.frame);
    stashed_reconnects_.erase(sit);
    out.merge(on_reconnect(now, stashed));
  }
  return out;
}

Outbox EdgeServer::on_handoff_ack(double now, const Frame& f) {
  (void)now;
  Outbox out;
  if (f.sender.kind != EntityKind::Edge) {
    out.say("ignored", "handoff ack with wrong sender kind");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "HandoffAck seq " + std::to_string(f.seq));
    return out;
  }
  bool had_pending = false;
  for (auto it = pending_handoff_.begin(); it != pending_handoff_.end(); ++it) {
    if (it->second.target != f.sender.id) continue;
    had_pending = true;
    AeadOpenResult opened = meter_.open_frame(f, it->second.transfer_key);
    if (!opened.ok()) continue;
    std::optional<HandoffAckBody> body = decode_handoff_ack(*opened.pt);
    if (!body || body->node_id != it->first) continue;
    floors_.accept(f.sender, f.seq);
    ++counters_.handoffs_completed;
    out.say("handoff_acked", node_tag(body->node_id));
    pending_handoff_.erase(it);
    return out;
  }
  if (had_pending) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "HandoffAck");
  } else {
    out.say("ignored", "HandoffAck without pending transfer");
  }
  return out;
}

Outbox EdgeServer::on_reconnect(double now, const Frame& f) {
  Outbox out;
  if (f.sender.kind != EntityKind::Node) {
    out.say("ignored", "reconnect with wrong sender kind");
    return out;
  }
  auto it = cache_.find(f.sender.id);
  if (it == cache_.end()) {
    // The node can outrun the transfer; park the frame until the state
    // arrives or the stash times out.
    StashedReconnect st;
    st.frame = f;
    st.deadline = now + params_.renew_timeout_ticks * params_.tick_interval;
    stashed_reconnects_[f.sender.id] = std::move(st);
    out.say("reconnect_stashed", entity_label(f.sender));
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "ReconnectRequest seq " + std::to_string(f.seq));
    return out;
  }
  CacheEntry& e = it->second;
  AeadOpenResult opened = meter_.open_frame(f, e.session_key);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "ReconnectRequest");
    return out;
  }
  std::optional<ReconnectBody> body = decode_reconnect(*opened.pt);
  if (!body) {
    out.say("ignored", "malformed ReconnectRequest body");
    return out;
  }
  floors_.accept(f.sender, f.seq);

  if (!ct_equal(ByteSpan(body->digest.data(), body->digest.size()),
                ByteSpan(e.app_digest.data(), e.app_digest.size()))) {
    e.active = false;
    out.say("digest_mismatch", entity_label(f.sender));
    ++counters_.rejects_sent;
    out.frames.push_back(sealed_frame(MsgType::Reject, f.sender, e.session_key,
                                      encode_reject({RejectReason::DigestMismatch})));
    return out;
  }

  const bool migrated_arrival =
      e.origin == CacheEntry::Origin::Migrated && !e.active;
  e.active = true;
  e.last_seen_seq = f.seq;
  ConnectAckBody ack{self_.id};
  out.frames.push_back(sealed_frame(MsgType::ConnectAck, f.sender, e.session_key,
                                    encode_connect_ack(ack)));
  if (migrated_arrival) {
    ++counters_.handoffs_completed;
    out.say("handoff_activated", entity_label(f.sender));
  } else {
    out.say("reconnect_ok", entity_label(f.sender));
  }
  return out;
}

Outbox EdgeServer::on_data(double now, const Frame& f) {
  (void)now;
  Outbox out;
  if (f.sender.kind != EntityKind::Node) {
    out.say("ignored", "data with wrong sender kind");
    return out;
  }
  auto it = cache_.find(f.sender.id);
  if (it == cache_.end()) {
    out.say("orphan_drop", entity_label(f.sender));
    return out;
  }
  CacheEntry& e = it->second;
  if (!e.active) {
    out.say("inactive_drop", entity_label(f.sender));
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "DataFrame seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult opened = meter_.open_frame(f, e.session_key);
  if (!opened.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "DataFrame");
    return out;
  }
  floors_.accept(f.sender, f.seq);

  // Sequence gaps reveal what the link ate between deliveries.
  const std::int64_t gap = static_cast<std::int64_t>(f.seq) - e.last_seen_seq;
  e.pdr_expected += static_cast<std::uint64_t>(gap > 0 ? gap : 1);
  e.pdr_delivered += 1;
  e.last_seen_seq = f.seq;
  delivered_.push_back(*opened.pt);
  out.say("data_ok", "len=" + std::to_string(opened.pt->size()));

  if (e.pdr_expected >= params_.pdr_window) {
    const double ratio = static_cast<double>(e.pdr_delivered) /
                         static_cast<double>(e.pdr_expected);
    if (ratio < params_.pdr_threshold) {
      ++counters_.jamming_alerts;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s pdr=%.2f",
                    node_tag(e.node_id).c_str(), ratio);
      out.say("jamming_suspected", buf);
    }
    e.pdr_expected = 0;
    e.pdr_delivered = 0;
  }
  return out;
}

Outbox EdgeServer::on_key_renew_confirm(double now, const Frame& f) {
  Outbox out;
  if (f.sender.kind != EntityKind::Node) {
    out.say("ignored", "renew confirm with wrong sender kind");
    return out;
  }
  auto it = cache_.find(f.sender.id);
  if (it == cache_.end() || !it->second.renew_pending) {
    out.say("ignored", "renew confirm without pending renewal");
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", "KeyRenewConfirm seq " + std::to_string(f.seq));
    return out;
  }
  CacheEntry& e = it->second;
  if (f.payload.size() != kNonceLen + kTagLen) {
    out.say("ignored", "malformed KeyRenewConfirm");
    return out;
  }
  ChallengeNonce responder{};
  std::copy_n(f.payload.begin(), kNonceLen, responder.begin());
  const SymmetricKey new_key = meter_.derive(e.session_key, e.renew_nonce, responder);
  Bytes aad = header_aad(f);
  aad.insert(aad.end(), responder.begin(), responder.end());
  AeadOpenResult opened =
      meter_.open(new_key, e.renew_nonce, aad,
                  ByteSpan(f.payload.data() + kNonceLen, kTagLen));
  if (!opened.ok() || !opened.pt->empty()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected", "KeyRenewConfirm");
    return out;
  }
  floors_.accept(f.sender, f.seq);
  e.session_key = new_key;
  e.last_renewed = now;
  e.renew_pending = false;
  out.say("key_renew_confirmed", entity_label(f.sender));
  return out;
}

Outbox EdgeServer::on_reject_frame(double now, const Frame& f) {
  (void)now;
  Outbox out;
  if (reg_pending_ && f.payload.size() == 1) {
    std::optional<RejectBody> body = decode_reject(f.payload);
    if (body) {
      out.say("register_rejected", reject_reason_name(body->reason));
      reg_pending_.reset();
      return out;
    }
  }
  for (auto it = pending_handoff_.begin(); it != pending_handoff_.end(); ++it) {
    if (it->second.target != f.sender.id || f.sender.kind != EntityKind::Edge) {
      continue;
    }
    AeadOpenResult opened = meter_.open_frame(f, it->second.transfer_key);
    if (!opened.ok()) continue;
    std::optional<RejectBody> body = decode_reject(*opened.pt);
    if (!body) continue;
    floors_.accept(f.sender, f.seq);
    out.say("handoff_rejected", node_tag(it->first) + " " +
                                    std::string(reject_reason_name(body->reason)));
    pending_handoff_.erase(it);
    return out;
  }
  out.say("ignored", "Reject not accepted");
  return out;
}

Outbox EdgeServer::on_tick(double now) {
  Outbox out;
  for (auto it = cache_.begin(); it != cache_.end();) {
    CacheEntry& e = it->second;
    if (e.renew_pending && now >= e.renew_deadline) {
      out.say("renew_timeout", node_tag(e.node_id));
      it = cache_.erase(it);
      continue;
    }
    const double age = now - e.last_renewed;
    if (!e.renew_pending && age >= e.ttl) {
      if (e.shared) {
        out.say("expired_shared", node_tag(e.node_id));
        it = cache_.erase(it);
        continue;
      }
      if (!e.active) {
        out.say("expired_inactive", node_tag(e.node_id));
        it = cache_.erase(it);
        continue;
      }
      if (pending_reco_.count(e.node_id) || pending_handoff_.count(e.node_id)) {
        // A migration decision is in flight; rotating the key now would
        // race the transfer. The entry is revisited next tick.
        ++it;
        continue;
      }
      e.renew_nonce = issuer_.issue(rng_);
      e.renew_pending = true;
      e.renew_deadline = now + params_.renew_timeout_ticks * params_.tick_interval;
      KeyRenewBody body{e.renew_nonce};
      out.frames.push_back(sealed_frame(MsgType::KeyRenew,
                                        EntityRef{EntityKind::Node, e.node_id},
                                        e.session_key, encode_key_renew(body)));
      out.say("renew_started", node_tag(e.node_id));
    }
    ++it;
  }
  sync_gauges();

  const double challenge_ttl =
      params_.renew_timeout_ticks * params_.tick_interval;
  for (auto it = pending_challenges_.begin(); it != pending_challenges_.end();) {
    if (now - it->second.issued_at >= challenge_ttl) {
      out.say("challenge_timeout", entity_label(it->first));
      it = pending_challenges_.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = pending_reco_.begin(); it != pending_reco_.end();) {
    if (now >= it->second) {
      out.say("recommend_timeout", node_tag(it->first));
      it = pending_reco_.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = pending_handoff_.begin(); it != pending_handoff_.end();) {
    if (now >= it->second.deadline) {
      out.say("handoff_timeout", node_tag(it->first));
      it = pending_handoff_.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = stashed_reconnects_.begin(); it != stashed_reconnects_.end();) {
    if (now >= it->second.deadline) {
      out.say("reconnect_timeout", node_tag(it->first));
      it = stashed_reconnects_.erase(it);
    } else {
      ++it;
    }
  }
  return out;
}

Frame EdgeServer::plain_reject(EntityRef to, RejectReason reason) {
  ++counters_.rejects_sent;
  Frame f = make_frame(MsgType::Reject, self_, to, seq_.next(to));
  f.payload = encode_reject({reason});
  return f;
}

Frame EdgeServer::sealed_frame(MsgType t, EntityRef to, const SymmetricKey& key,
                               ByteSpan body) {
  Frame f = make_frame(t, self_, to, seq_.next(to));
  meter_.seal_frame(f, key, issuer_.issue(rng_), body);
  return f;
}

Frame EdgeServer::strike(EntityRef who, RejectReason reason, bool server_flavor,
                         Outbox& out) {
  if (server_flavor) {
    add_denylist(who, out);
    return plain_reject(who, RejectReason::Denylisted);
  }
  const std::uint32_t n = ++strikes_[who];
  if (n >= params_.denylist_threshold) {
    add_denylist(who, out);
    return plain_reject(who, RejectReason::Denylisted);
  }
  return plain_reject(who, reason);
}

void EdgeServer::add_denylist(EntityRef who, Outbox& out) {
  denylist_.insert(who);
  sync_gauges();
  out.say("denylisted", entity_label(who));
}

void EdgeServer::erase_entry(std::uint64_t node_id) {
  cache_.erase(node_id);
  sync_gauges();
}

void EdgeServer::sync_gauges() {
  counters_.cache_entries = cache_.size();
  counters_.denylist_size = denylist_.size();
}

}  // namespace miot
