#include "miot/name_server.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace miot {

NameServer::NameServer(const Params& params, DetRng& rng, const SymmetricKey& domain_key)
    : params_(params), rng_(rng), domain_key_(domain_key) {}

void NameServer::install_edge_key(std::uint64_t edge_id, const SymmetricKey& key) {
  keys_[edge_id] = key;
}

RegisterError NameServer::register_direct(const NameRecord& rec) {
  if (registry_.count(rec.edge_id)) return RegisterError::duplicate_edge;
  if (lookup_name(rec.name)) return RegisterError::duplicate_name;
  registry_[rec.edge_id] = rec;
  return RegisterError::ok;
}

Outbox NameServer::handle_frame(double now, const Frame& f) {
  Outbox out;
  ++counters_.frames_received;
  if (f.sender.kind != EntityKind::Edge) {
    out.say("ignored", "non-edge sender");
    return out;
  }
  auto kit = keys_.find(f.sender.id);
  if (kit == keys_.end()) {
    out.say("ignored", "no key for " + entity_label(f.sender));
    return out;
  }
  if (f.type != MsgType::RegisterEdge && f.type != MsgType::RecommendRequest) {
    out.say("ignored", std::string("unexpected ") + msg_type_name(f.type));
    return out;
  }
  if (!floors_.fresh(f.sender, f.seq)) {
    ++counters_.replays_detected;
    out.say("replay_detected", entity_label(f.sender) + " seq " + std::to_string(f.seq));
    return out;
  }
  AeadOpenResult body = meter_.open_frame(f, kit->second);
  if (!body.ok()) {
    ++counters_.tampers_detected;
    out.say("tamper_detected",
            std::string(msg_type_name(f.type)) + " from " + entity_label(f.sender));
    return out;
  }
  floors_.accept(f.sender, f.seq);
  if (f.type == MsgType::RegisterEdge) {
    Outbox r = on_register_edge(now, f, kit->second, *body.pt);
    out.merge(std::move(r));
  } else {
    Outbox r = on_recommend_request(now, f, kit->second, *body.pt);
    out.merge(std::move(r));
  }
  return out;
}

Outbox NameServer::on_register_edge(double now, const Frame& f, const SymmetricKey& key,
                                    const Bytes& plain) {
  Outbox out;
  std::optional<RegisterEdgeBody> body = decode_register_edge(plain);
  if (!body) {
    out.say("malformed", "RegisterEdge body");
    return out;
  }
  if (body->record.authenticated_by != f.sender.id) {
    out.say("register_failed", "registrar mismatch");
    return out;
  }
  if (registry_.count(body->record.edge_id)) {
    out.say("register_failed", "duplicate edge id");
    return out;
  }
  if (lookup_name(body->record.name)) {
    out.say("register_failed", "duplicate name");
    return out;
  }
  NameRecord rec;
  rec.edge_id = body->record.edge_id;
  rec.name = body->record.name;
  rec.address = body->record.address;
  rec.x = body->record.x;
  rec.y = body->record.y;
  rec.capacity = body->record.capacity;
  rec.current_load = 0;
  rec.authenticated_by = body->record.authenticated_by;
  rec.registered_at = now;
  registry_[rec.edge_id] = rec;

  const SymmetricKey newcomer_key = meter_.derive(domain_key_, body->nonce_a, body->nonce_b);
  keys_[rec.edge_id] = newcomer_key;

  RegisterAckBody ack{rec.edge_id};
  const Bytes ack_body = encode_register_ack(ack);
  out.frames.push_back(sealed_reply(MsgType::RegisterAck, f.sender.id, key, ack_body));
  out.frames.push_back(
      sealed_reply(MsgType::RegisterAck, rec.edge_id, newcomer_key, ack_body));
  out.say("edge_registered",
          "edge:" + std::to_string(rec.edge_id) + " via " + entity_label(f.sender));
  return out;
}

Outbox NameServer::on_recommend_request(double now, const Frame& f,
                                        const SymmetricKey& key, const Bytes& plain) {
  (void)now;
  Outbox out;
  std::optional<RecommendRequestBody> body = decode_recommend_request(plain);
  if (!body) {
    out.say("malformed", "RecommendRequest body");
    return out;
  }
  update_load(f.sender.id, body->reporter_load);

  RecommendReplyBody reply;
  reply.node_id = body->node_id;
  reply.recommended = recommend(body->x, body->y, body->exclude_edge);
  if (reply.recommended) {
    if (body->want_ticket) {
      TicketGrant t;
      t.n1 = issuer_.issue(rng_);
      t.n2 = issuer_.issue(rng_);
      t.transfer_key = meter_.derive(keys_.at(*reply.recommended), t.n1, t.n2);
      reply.ticket = t;
    }
    // Count the slot as taken until the target's own next report.
    NameRecord& target = registry_.at(*reply.recommended);
    target.current_load = std::min(target.capacity, target.current_load + 1);
    out.say("recommended", "edge:" + std::to_string(*reply.recommended) + " for node:" +
                               std::to_string(body->node_id));
  } else {
    out.say("no_recommendation", "node:" + std::to_string(body->node_id));
  }
  out.frames.push_back(sealed_reply(MsgType::RecommendReply, f.sender.id, key,
                                    encode_recommend_reply(reply)));
  return out;
}

Frame NameServer::sealed_reply(MsgType t, std::uint64_t edge_id, const SymmetricKey& key,
                               ByteSpan body) {
  EntityRef to{EntityKind::Edge, edge_id};
  Frame f = make_frame(t, ref(), to, seq_.next(to));
  meter_.seal_frame(f, key, issuer_.issue(rng_), body);
  return f;
}

std::optional<std::uint64_t> NameServer::recommend(double x, double y,
                                                   std::uint64_t exclude) const {
  std::optional<std::uint64_t> best;
  double best_score = 0;
  for (const auto& [id, rec] : registry_) {
    if (id == exclude || rec.current_load >= rec.capacity) continue;
    const double dist = std::hypot(rec.x - x, rec.y - y);
    const double score =
        params_.weight_distance * (dist / params_.distance_norm) +
        params_.weight_load *
            (static_cast<double>(rec.current_load) / static_cast<double>(rec.capacity));
    // Map iteration is id-ascending, so strict < keeps the smallest id on ties.
    if (!best || score < best_score) {
      best = id;
      best_score = score;
    }
  }
  return best;
}

const NameRecord* NameServer::lookup_name(const std::string& name) const {
  for (const auto& [id, rec] : registry_) {
    if (rec.name == name) return &rec;
  }
  return nullptr;
}

const NameRecord* NameServer::lookup_address(const std::string& address) const {
  for (const auto& [id, rec] : registry_) {
    if (rec.address == address) return &rec;
  }
  return nullptr;
}

void NameServer::update_load(std::uint64_t edge_id, std::uint32_t load) {
  auto it = registry_.find(edge_id);
  if (it == registry_.end()) return;
  it->second.current_load = std::min(load, it->second.capacity);
}

std::string NameServer::registry_dump() const {
  std::string out;
  char line[512];
  for (const auto& [id, rec] : registry_) {
    std::snprintf(line, sizeof(line),
                  "edge=%llu name=%s address=%s x=%.6f y=%.6f capacity=%u load=%u "
                  "authenticated_by=%llu registered_at=%.6f\n",
                  static_cast<unsigned long long>(id), rec.name.c_str(),
                  rec.address.c_str(), rec.x, rec.y, rec.capacity, rec.current_load,
                  static_cast<unsigned long long>(rec.authenticated_by),
                  rec.registered_at);
    out += line;
  }
  return out;
}

Outbox NameServer::on_tick(double now) {
  (void)now;
  return {};
}

}  // namespace miot
