#include "miot/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace miot {

namespace {

constexpr std::size_t kEdgePskCount = 2;

std::string fmt_len(std::size_t n) { return "len=" + std::to_string(n); }

std::string dash_if_empty(std::string s) { return s.empty() ? "-" : s; }

ProvisioningDirectory make_directory(DetRng& rng) {
  ProvisioningDirectory d;
  d.domain_key = rng.bytes16();
  d.fingerprint_salt = rng.bytes(16);
  return d;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t sep = line.find(" | ", pos);
    if (sep == std::string::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, sep - pos));
    pos = sep + 3;
  }
}

}  // namespace

Counters& operator+=(Counters& a, const Counters& b) {
  a.full_auths += b.full_auths;
  a.challenges_issued += b.challenges_issued;
  a.handoffs_completed += b.handoffs_completed;
  a.replays_detected += b.replays_detected;
  a.tampers_detected += b.tampers_detected;
  a.jamming_alerts += b.jamming_alerts;
  a.rejects_sent += b.rejects_sent;
  a.frames_sent += b.frames_sent;
  a.frames_received += b.frames_received;
  a.bytes_sent += b.bytes_sent;
  a.aead_ops += b.aead_ops;
  a.hash_ops += b.hash_ops;
  a.denylist_size += b.denylist_size;
  a.cache_entries += b.cache_entries;
  return a;
}

World::World(const Params& params, Mode mode, std::uint64_t seed)
    : params_(params),
      mode_(mode),
      rng_(seed),
      dir_(make_directory(rng_)),
      ns_(params_, rng_, dir_.domain_key) {}

void World::add_edge(std::uint64_t id, std::string name, std::string address,
                     double x, double y, std::uint32_t capacity) {
  if (edges_.count(id)) throw std::invalid_argument("duplicate edge id");
  EdgeProvision ep;
  ep.id = id;
  ep.model = "edge-station";
  for (std::size_t i = 0; i < kEdgePskCount; ++i) {
    ep.psks[static_cast<std::uint16_t>(i)] = rng_.bytes16();
  }
  ep.fingerprint = fingerprint_of(static_cast<std::uint8_t>(EntityKind::Edge), id,
                                  ep.model, dir_.fingerprint_salt);
  dir_.edges[id] = ep;
  edges_.try_emplace(id, id, params_, mode_, dir_, rng_, std::move(name),
                     std::move(address), x, y, capacity);
}

void World::add_node(std::uint64_t id, double x, double y, Bytes app_image,
                     std::string model, std::vector<std::uint16_t> psk_indices) {
  if (nodes_.count(id)) throw std::invalid_argument("duplicate node id");
  if (psk_indices.empty()) throw std::invalid_argument("node needs a psk index");
  NodeProvision np;
  np.id = id;
  np.model = std::move(model);
  for (std::uint16_t idx : psk_indices) {
    np.psks[idx] = rng_.bytes16();
  }
  np.fingerprint = fingerprint_of(static_cast<std::uint8_t>(EntityKind::Node), id,
                                  np.model, dir_.fingerprint_salt);
  np.approved_digest = lw_hash(app_image);
  dir_.nodes[id] = np;
  nodes_.try_emplace(id, id, params_, dir_, rng_, std::move(app_image));
  node_pos_[id] = {x, y};
}

void World::bootstrap_edge(std::uint64_t id) {
  EdgeServer& e = edge(id);
  const SymmetricKey key = rng_.bytes16();
  ns_.install_edge_key(id, key);
  e.bootstrap_registered(key);
  NameRecord rec;
  rec.edge_id = id;
  rec.name = e.name();
  rec.address = e.address();
  rec.x = e.x();
  rec.y = e.y();
  rec.capacity = e.capacity();
  rec.authenticated_by = 0;
  rec.registered_at = 0.0;
  if (ns_.register_direct(rec) != RegisterError::ok) {
    throw std::invalid_argument("bootstrap registration failed");
  }
}

void World::set_link(EntityRef src, EntityRef dst, LinkParams lp) {
  links_[{src, dst}] = lp;
}

LinkParams World::link(EntityRef src, EntityRef dst) const {
  auto it = links_.find({src, dst});
  return it == links_.end() ? default_link_ : it->second;
}

void World::push(double t, EventBody body) {
  queue_.push(Event{t, next_order_++, std::move(body)});
}

void World::schedule_edge_register(double t, std::uint64_t e, std::uint64_t via) {
  push(t, EdgeRegisterEv{e, via});
}
void World::schedule_join(double t, std::uint64_t n, std::uint64_t e) {
  push(t, NodeJoinEv{n, e});
}
void World::schedule_send(double t, std::uint64_t n, Bytes payload) {
  push(t, NodeSendEv{n, std::move(payload)});
}
void World::schedule_sends(double t0, std::uint64_t n, std::uint32_t count,
                           double interval, const std::string& prefix) {
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string text = prefix + "-" + std::to_string(k);
    push(t0 + k * interval, NodeSendEv{n, Bytes(text.begin(), text.end())});
  }
}
void World::schedule_waypoint(double t, std::uint64_t n, double x, double y) {
  push(t, WaypointEv{n, x, y});
}
void World::schedule_corrupt_image(double t, std::uint64_t n, std::size_t index) {
  push(t, CorruptImageEv{n, index});
}
void World::schedule_capture(double t, CaptureSpec spec) {
  push(t, ArmCaptureEv{std::move(spec)});
}
void World::schedule_replay(double t, int slot, std::uint32_t count,
                            double interval) {
  for (std::uint32_t k = 0; k < count; ++k) {
    push(t + k * interval, ReplayShotEv{slot});
  }
}
void World::schedule_tamper(double t, TamperSpec spec) {
  push(t, ArmTamperEv{std::move(spec)});
}
void World::schedule_forge_join(double t, EntityRef fake, std::uint64_t target) {
  push(t, ForgeJoinEv{fake, target});
}
void World::schedule_set_drop(double t, EntityRef src, EntityRef dst, double p) {
  push(t, SetDropEv{src, dst, p});
}
void World::schedule_duplicate_entry(double t, std::uint64_t node_id) {
  push(t, InjectDuplicateEv{node_id});
}

NodeAgent& World::node(std::uint64_t id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("unknown node id");
  return it->second;
}

EdgeServer& World::edge(std::uint64_t id) {
  auto it = edges_.find(id);
  if (it == edges_.end()) throw std::out_of_range("unknown edge id");
  return it->second;
}

void World::run(double horizon) {
  if (ran_) throw std::logic_error("run() may only be called once");
  ran_ = true;
  for (std::uint64_t k = 1; k * params_.tick_interval <= horizon + 1e-9; ++k) {
    push(k * params_.tick_interval, TickEv{});
  }
  while (!queue_.empty() && queue_.top().time <= horizon + 1e-9) {
    Event ev = queue_.top();
    queue_.pop();
    now_ = ev.time;
    dispatch(ev);
  }
  // Frames still in flight at the horizon count as expired, not lost.
  while (!queue_.empty()) {
    const Event& ev = queue_.top();
    if (const auto* d = std::get_if<DeliverEv>(&ev.body)) {
      ++wire_[{d->src, d->dst}].expired;
    }
    queue_.pop();
  }
  end_of_run_checks();
  reconcile_transcript();
}

void World::dispatch(const Event& ev) {
  if (const auto* d = std::get_if<DeliverEv>(&ev.body)) {
    handle_deliver(*d);
  } else if (std::get_if<TickEv>(&ev.body)) {
    handle_tick();
  } else if (const auto* r = std::get_if<EdgeRegisterEv>(&ev.body)) {
    EdgeServer& e = edge(r->edge);
    dispatch_outbox(e.ref(), e.counters(), e.initiate_register(now_, r->via));
  } else if (const auto* j = std::get_if<NodeJoinEv>(&ev.body)) {
    NodeAgent& n = node(j->node);
    dispatch_outbox(n.ref(), n.counters(), n.initiate_join(now_, j->edge));
  } else if (const auto* s = std::get_if<NodeSendEv>(&ev.body)) {
    NodeAgent& n = node(s->node);
    dispatch_outbox(n.ref(), n.counters(),
                    n.send_data(now_, ByteSpan(s->payload.data(), s->payload.size())));
  } else if (const auto* w = std::get_if<WaypointEv>(&ev.body)) {
    node_pos_[w->node] = {w->x, w->y};
    NodeAgent& n = node(w->node);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "x=%.1f y=%.1f", w->x, w->y);
    line("note", entity_label(n.ref()), "-", "-", "moved", buf);
    if (n.phase() == NodeAgent::Phase::Connected && n.current_edge()) {
      EdgeServer& e = edge(*n.current_edge());
      const double d = std::hypot(w->x - e.x(), w->y - e.y());
      if (d > params_.coverage_radius) {
        dispatch_outbox(e.ref(), e.counters(),
                        e.initiate_handoff(now_, w->node, w->x, w->y));
      }
    }
  } else if (const auto* c = std::get_if<CorruptImageEv>(&ev.body)) {
    NodeAgent& n = node(c->node);
    n.corrupt_app_image(c->index);
    line("note", entity_label(n.ref()), "-", "-", "image_corrupted",
         "index=" + std::to_string(c->index));
  } else if (const auto* ac = std::get_if<ArmCaptureEv>(&ev.body)) {
    adv_.captures.push_back(ac->spec);
    line("adversary", "-", "-", "-", "capture_armed",
         "slot=" + std::to_string(ac->spec.slot));
  } else if (const auto* rs = std::get_if<ReplayShotEv>(&ev.body)) {
    auto it = adv_.captured.find(rs->slot);
    if (it == adv_.captured.end()) {
      line("adversary", "-", "-", "-", "replay_empty",
           "slot=" + std::to_string(rs->slot));
    } else {
      const CapturedFrame& cf = it->second;
      ++adv_.counters.frames_sent;
      adv_.counters.bytes_sent += cf.bytes.size();
      ++wire_[{cf.src, cf.dst}].sends;
      line("adversary", entity_label(cf.src), entity_label(cf.dst),
           msg_type_name(cf.type), "replayed", fmt_len(cf.bytes.size()));
      link_deliver(cf.src, cf.dst, cf.bytes);
    }
  } else if (const auto* at = std::get_if<ArmTamperEv>(&ev.body)) {
    adv_.tampers.push_back(at->spec);
    line("adversary", "-", "-", "-", "tamper_armed", "");
  } else if (const auto* fj = std::get_if<ForgeJoinEv>(&ev.body)) {
    Frame f;
    f.sender = fj->fake;
    f.receiver = EntityRef{EntityKind::Edge, fj->target};
    f.seq = adv_.seq.next(f.receiver);
    Bytes body;
    if (fj->fake.kind == EntityKind::Node) {
      f.type = MsgType::NodeJoinRequest;
      NodeJoinBody b;
      b.psk_index = 0;
      b.psk = rng_.bytes16();  // guessed; the directory will not match it
      body = encode_node_join(b);
    } else {
      f.type = MsgType::ServerJoinRequest;
      ServerJoinBody b;
      b.psk_index = 0;
      b.psk = rng_.bytes16();
      b.announce = EdgeAnnounce{"rogue", "0.0.0.0", 0.0, 0.0, 1};
      body = encode_server_join(b);
    }
    adv_.meter.seal_frame(f, dir_.domain_key, adv_.issuer.issue(rng_), body);
    line("adversary", entity_label(f.sender), entity_label(f.receiver),
         msg_type_name(f.type), "forged", "");
    send_frame(adv_.counters, f);
  } else if (const auto* sd = std::get_if<SetDropEv>(&ev.body)) {
    LinkParams lp = link(sd->src, sd->dst);
    lp.drop = sd->drop;
    links_[{sd->src, sd->dst}] = lp;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "p=%.2f", sd->drop);
    line("adversary", entity_label(sd->src), entity_label(sd->dst), "-",
         "set_drop", buf);
  } else if (const auto* dup = std::get_if<InjectDuplicateEv>(&ev.body)) {
    force_duplicate_entry(dup->node);
    line("note", "-", "-", "-", "entry_duplicated",
         "node:" + std::to_string(dup->node));
  }
}

void World::handle_tick() {
  dispatch_outbox(ns_.ref(), ns_.counters(), ns_.on_tick(now_));
  for (auto& [id, e] : edges_) {
    dispatch_outbox(e.ref(), e.counters(), e.on_tick(now_));
  }
  for (auto& [id, n] : nodes_) {
    dispatch_outbox(n.ref(), n.counters(), n.on_tick(now_));
  }
}

void World::handle_deliver(const DeliverEv& ev) {
  ++wire_[{ev.src, ev.dst}].delivers;
  auto decoded = decode_frame(ByteSpan(ev.bytes.data(), ev.bytes.size()));
  if (const auto* err = std::get_if<DecodeError>(&decoded)) {
    line("deliver", entity_label(ev.src), entity_label(ev.dst), "?",
         "undecodable", decode_error_name(*err));
    if (Counters* c = find_counters(ev.dst)) {
      ++c->frames_received;
      ++c->tampers_detected;
    }
    return;
  }
  const Frame& f = std::get<Frame>(decoded);
  Outbox out;
  Counters* owner = nullptr;
  EntityRef who = ev.dst;
  if (ev.dst.kind == EntityKind::Node && nodes_.count(ev.dst.id)) {
    NodeAgent& n = node(ev.dst.id);
    out = n.handle_frame(now_, f);
    owner = &n.counters();
    who = n.ref();
  } else if (ev.dst.kind == EntityKind::Edge && edges_.count(ev.dst.id)) {
    EdgeServer& e = edge(ev.dst.id);
    out = e.handle_frame(now_, f);
    owner = &e.counters();
    who = e.ref();
  } else if (ev.dst.kind == EntityKind::NameServer) {
    out = ns_.handle_frame(now_, f);
    owner = &ns_.counters();
    who = ns_.ref();
  } else {
    line("deliver", entity_label(ev.src), entity_label(ev.dst),
         msg_type_name(f.type), "no_such_entity", "");
    return;
  }

  const std::string outcome = out.notes.empty() ? "ok" : out.notes[0].what;
  const std::string detail = out.notes.empty() ? "" : out.notes[0].detail;
  line("deliver", entity_label(ev.src), entity_label(ev.dst),
       msg_type_name(f.type), outcome, detail);

  bool renewed = false;
  for (const Note& n : out.notes) {
    if (n.what == "key_renew_confirmed") renewed = true;
  }
  dispatch_outbox(who, *owner, std::move(out), 1);
  if (renewed && f.sender.kind == EntityKind::Node) {
    scan_key_location(f.sender.id);
  }
}

void World::dispatch_outbox(EntityRef who, Counters& owner, Outbox&& out,
                            std::size_t note_from) {
  for (std::size_t i = note_from; i < out.notes.size(); ++i) {
    line("note", entity_label(who), "-", "-", out.notes[i].what,
         out.notes[i].detail);
  }
  for (Frame& f : out.frames) {
    send_frame(owner, f);
  }
}

void World::send_frame(Counters& owner, const Frame& f) {
  Bytes bytes = encode_frame(f);
  ++owner.frames_sent;
  owner.bytes_sent += bytes.size();
  ++wire_[{f.sender, f.receiver}].sends;
  line("send", entity_label(f.sender), entity_label(f.receiver),
       msg_type_name(f.type), "sent", fmt_len(bytes.size()));

  for (auto it = adv_.captures.begin(); it != adv_.captures.end(); ++it) {
    if (!match(*it, f)) continue;
    adv_.captured[it->slot] = CapturedFrame{bytes, f.sender, f.receiver, f.type};
    line("adversary", entity_label(f.sender), entity_label(f.receiver),
         msg_type_name(f.type), "captured",
         "slot=" + std::to_string(it->slot) + " " + fmt_len(bytes.size()));
    adv_.captures.erase(it);
    break;
  }
  for (auto it = adv_.tampers.begin(); it != adv_.tampers.end(); ++it) {
    if (!match(*it, f) || bytes.size() <= kHeaderLen) continue;
    const std::size_t payload_bits = (bytes.size() - kHeaderLen) * 8;
    const std::size_t off =
        it->bit ? (*it->bit % payload_bits) : rng_.pick(payload_bits);
    const std::size_t bit = kHeaderLen * 8 + off;
    bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    line("adversary", entity_label(f.sender), entity_label(f.receiver),
         msg_type_name(f.type), "tampered", "bit=" + std::to_string(bit));
    adv_.tampers.erase(it);
    break;
  }
  link_deliver(f.sender, f.receiver, std::move(bytes));
}

void World::link_deliver(EntityRef src, EntityRef dst, Bytes bytes) {
  const LinkParams lp = link(src, dst);
  if (lp.drop > 0.0 && rng_.chance(lp.drop)) {
    ++wire_[{src, dst}].drops;
    line("drop", entity_label(src), entity_label(dst), "-", "dropped",
         fmt_len(bytes.size()));
    return;
  }
  double at = now_ + lp.latency;
  if (lp.jitter > 0.0) at += rng_.uniform(0.0, lp.jitter);
  // FIFO per directed link: nothing overtakes an earlier frame.
  double& last = last_delivery_[{src, dst}];
  if (at < last) at = last;
  last = at;
  push(at, DeliverEv{src, dst, std::move(bytes)});
}

Counters* World::find_counters(EntityRef who) {
  if (who.kind == EntityKind::Node) {
    auto it = nodes_.find(who.id);
    return it == nodes_.end() ? nullptr : &it->second.counters();
  }
  if (who.kind == EntityKind::Edge) {
    auto it = edges_.find(who.id);
    return it == edges_.end() ? nullptr : &it->second.counters();
  }
  return &ns_.counters();
}

void World::line(const std::string& kind, const std::string& sender,
                 const std::string& receiver, const std::string& msg,
                 const std::string& outcome, const std::string& detail) {
  char tbuf[32];
  std::snprintf(tbuf, sizeof(tbuf), "%.3f", now_);
  transcript_.push_back(std::string(tbuf) + " | " + kind + " | " +
                        dash_if_empty(sender) + " | " + dash_if_empty(receiver) +
                        " | " + dash_if_empty(msg) + " | " +
                        dash_if_empty(outcome) + " | " + dash_if_empty(detail));
}

bool World::match(const CaptureSpec& s, const Frame& f) {
  if (s.sender && *s.sender != f.sender) return false;
  if (s.receiver && *s.receiver != f.receiver) return false;
  if (s.type && *s.type != f.type) return false;
  return true;
}

bool World::match(const TamperSpec& s, const Frame& f) {
  if (s.sender && *s.sender != f.sender) return false;
  if (s.receiver && *s.receiver != f.receiver) return false;
  if (s.type && *s.type != f.type) return false;
  return true;
}

void World::scan_key_location(std::uint64_t node_id) {
  std::size_t count = 0;
  for (const auto& [id, e] : edges_) {
    count += e.cache().count(node_id);
  }
  if (count != 1) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "key_location: node:%llu has %zu cache entries after "
                  "renewal at t=%.3f",
                  static_cast<unsigned long long>(node_id), count, now_);
    violations_.push_back(buf);
  }
}

void World::force_duplicate_entry(std::uint64_t node_id) {
  const EdgeServer::CacheEntry* found = nullptr;
  std::uint64_t holder = 0;
  for (const auto& [id, e] : edges_) {
    const auto* ce = e.entry(node_id);
    if (ce && ce->active && !ce->shared) {
      found = ce;
      holder = id;
      break;
    }
  }
  if (!found) return;
  for (auto& [id, e] : edges_) {
    if (id == holder) continue;
    e.test_inject_entry(*found);
    return;
  }
}

void World::end_of_run_checks() {
  for (const auto& [nid, n] : nodes_) {
    std::size_t live = 0;
    for (const auto& [eid, e] : edges_) {
      const auto* ce = e.entry(nid);
      if (ce && !ce->shared) ++live;
    }
    if (live > 1) {
      violations_.push_back("end_state: node:" + std::to_string(nid) + " has " +
                            std::to_string(live) + " unshared cache entries");
    }
    const bool in_session = n.phase() == NodeAgent::Phase::Connected ||
                            n.phase() == NodeAgent::Phase::Reconnecting;
    if (in_session != (n.session_key() != nullptr) ||
        in_session != n.current_edge().has_value()) {
      violations_.push_back("end_state: node:" + std::to_string(nid) +
                            " session state inconsistent with phase");
    }
  }
  for (const auto& [eid, e] : edges_) {
    if (e.cache().size() > e.capacity()) {
      violations_.push_back("end_state: edge:" + std::to_string(eid) +
                            " cache exceeds capacity");
    }
  }
  for (const auto& [rid, rec] : ns_.registry()) {
    if (rec.authenticated_by != 0 && !ns_.registry().count(rec.authenticated_by)) {
      violations_.push_back("registry: edge:" + std::to_string(rid) +
                            " authenticated by unregistered edge:" +
                            std::to_string(rec.authenticated_by));
    }
    for (const auto& [eid, e] : edges_) {
      if (e.denylist().count(EntityRef{EntityKind::Edge, rid})) {
        violations_.push_back("registry: edge:" + std::to_string(rid) +
                              " is registered but denylisted at edge:" +
                              std::to_string(eid));
      }
    }
  }
  for (const auto& [pair, w] : wire_) {
    if (w.sends != w.delivers + w.drops + w.expired) {
      violations_.push_back(
          "conservation: " + entity_label(pair.first) + "->" +
          entity_label(pair.second) + " sends=" + std::to_string(w.sends) +
          " delivers=" + std::to_string(w.delivers) +
          " drops=" + std::to_string(w.drops) +
          " expired=" + std::to_string(w.expired));
    }
  }
}

void World::reconcile_transcript() {
  std::map<std::string, Counters> rc;
  auto count_outcome = [](Counters& c, const std::string& outcome) {
    if (outcome == "replay_detected") ++c.replays_detected;
    if (outcome == "tamper_detected" || outcome == "undecodable") {
      ++c.tampers_detected;
    }
    if (outcome == "full_auth" || outcome == "auth_ok") ++c.full_auths;
    if (outcome == "challenge_issued") ++c.challenges_issued;
    if (outcome == "handoff_complete" || outcome == "handoff_acked" ||
        outcome == "handoff_activated") {
      ++c.handoffs_completed;
    }
    if (outcome == "jamming_suspected") ++c.jamming_alerts;
    if (outcome == "denylisted") ++c.denylist_size;
  };
  for (const std::string& ln : transcript_) {
    const std::vector<std::string> f = split_fields(ln);
    if (f.size() != 7) {
      violations_.push_back("transcript: malformed line: " + ln);
      continue;
    }
    const std::string& kind = f[1];
    if (kind == "send") {
      Counters& c = rc[f[2]];
      ++c.frames_sent;
      if (f[6].rfind("len=", 0) == 0) {
        c.bytes_sent += std::stoull(f[6].substr(4));
      }
    } else if (kind == "deliver") {
      Counters& c = rc[f[3]];
      ++c.frames_received;
      count_outcome(c, f[5]);
    } else if (kind == "note") {
      count_outcome(rc[f[2]], f[5]);
    }
  }

  auto check = [&](const std::string& label, const Counters& actual) {
    const Counters& t = rc[label];
    auto diff = [&](const char* field, std::uint64_t a, std::uint64_t b) {
      if (a != b) {
        violations_.push_back("reconcile: " + label + " " + field + " counter=" +
                              std::to_string(a) + " transcript=" +
                              std::to_string(b));
      }
    };
    diff("frames_sent", actual.frames_sent, t.frames_sent);
    diff("bytes_sent", actual.bytes_sent, t.bytes_sent);
    diff("frames_received", actual.frames_received, t.frames_received);
    diff("full_auths", actual.full_auths, t.full_auths);
    diff("challenges_issued", actual.challenges_issued, t.challenges_issued);
    diff("replays_detected", actual.replays_detected, t.replays_detected);
    diff("tampers_detected", actual.tampers_detected, t.tampers_detected);
    diff("jamming_alerts", actual.jamming_alerts, t.jamming_alerts);
    diff("denylist_size", actual.denylist_size, t.denylist_size);
    diff("handoffs_completed", actual.handoffs_completed, t.handoffs_completed);
  };
  check(entity_label(ns_.ref()), ns_.counters());
  for (const auto& [id, e] : edges_) check(entity_label(e.ref()), e.counters());
  for (const auto& [id, n] : nodes_) check(entity_label(n.ref()), n.counters());
}

std::string World::transcript_text() const {
  std::string out;
  for (const std::string& ln : transcript_) {
    out += ln;
    out += '\n';
  }
  return out;
}

std::map<std::string, Counters> World::counters_by_label() const {
  std::map<std::string, Counters> out;
  Counters global;
  out[entity_label(kNameServerRef)] = ns_.counters();
  global += ns_.counters();
  for (const auto& [id, e] : edges_) {
    out[entity_label(e.ref())] = e.counters();
    global += e.counters();
  }
  for (const auto& [id, n] : nodes_) {
    out[entity_label(n.ref())] = n.counters();
    global += n.counters();
  }
  out["adversary"] = adv_.counters;
  out["global"] = global;
  return out;
}

std::string World::metrics_text() const {
  auto one = [&](const std::string& label, const Counters& c) {
    char buf[512];
    std::snprintf(
        buf, sizeof(buf),
        "entity=%s full_auths=%llu challenges_issued=%llu aead_ops=%llu "
        "hash_ops=%llu bytes_sent=%llu replays_detected=%llu "
        "tampers_detected=%llu jamming_alerts=%llu denylist_size=%llu "
        "handoffs_completed=%llu energy_proxy=%.2f\n",
        label.c_str(), static_cast<unsigned long long>(c.full_auths),
        static_cast<unsigned long long>(c.challenges_issued),
        static_cast<unsigned long long>(c.aead_ops),
        static_cast<unsigned long long>(c.hash_ops),
        static_cast<unsigned long long>(c.bytes_sent),
        static_cast<unsigned long long>(c.replays_detected),
        static_cast<unsigned long long>(c.tampers_detected),
        static_cast<unsigned long long>(c.jamming_alerts),
        static_cast<unsigned long long>(c.denylist_size),
        static_cast<unsigned long long>(c.handoffs_completed),
        c.energy_proxy(params_));
    return std::string(buf);
  };
  std::string out;
  out += one(entity_label(kNameServerRef), ns_.counters());
  for (const auto& [id, e] : edges_) out += one(entity_label(e.ref()), e.counters());
  for (const auto& [id, n] : nodes_) out += one(entity_label(n.ref()), n.counters());
  out += one("adversary", adv_.counters);
  Counters global;
  global += ns_.counters();
  for (const auto& [id, e] : edges_) global += e.counters();
  for (const auto& [id, n] : nodes_) global += n.counters();
  out += one("global", global);
  return out;
}

}  // namespace miot
