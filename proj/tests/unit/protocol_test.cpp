#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "miot/edge.hpp"
#include "miot/messages.hpp"
#include "miot/name_server.hpp"
#include "miot/node.hpp"
#include "miot/session.hpp"

using namespace miot;

namespace {

// Direct-wired agents: frames move by explicit handler calls with no
// network in between, so every step of an exchange can be observed,
// intercepted, or withheld.
struct Bench {
  Params params;
  DetRng rng;
  ProvisioningDirectory dir;
  NameServer ns;
  std::map<std::uint64_t, EdgeServer> edges;
  std::map<std::uint64_t, NodeAgent> nodes;
  std::map<std::uint64_t, SymmetricKey> ns_keys;
  std::vector<Frame> wire;  // every frame the last pump delivered

  explicit Bench(Params p = {}, std::uint64_t seed = 71)
      : params(p), rng(seed), dir(seed_dir(rng)), ns(params, rng, dir.domain_key) {}

  static ProvisioningDirectory seed_dir(DetRng& rng) {
    ProvisioningDirectory d;
    d.domain_key = rng.bytes16();
    d.fingerprint_salt = rng.bytes(16);
    return d;
  }

  EdgeServer& add_edge(std::uint64_t id, double x, double y, std::uint32_t capacity,
                       Mode mode = Mode::Migration) {
    EdgeProvision ep;
    ep.id = id;
    ep.model = "edge-station";
    ep.psks[0] = rng.bytes16();
    ep.fingerprint = fingerprint_of(static_cast<std::uint8_t>(EntityKind::Edge), id,
                                    ep.model, dir.fingerprint_salt);
    dir.edges[id] = ep;
    auto [it, inserted] = edges.try_emplace(
        id, id, params, mode, dir, rng, "edge-" + std::to_string(id),
        "10.0." + std::to_string(id) + ".1", x, y, capacity);
    REQUIRE(inserted);
    return it->second;
  }

  EdgeServer& bootstrap(std::uint64_t id) {
    EdgeServer& e = edges.at(id);
    const SymmetricKey key = rng.bytes16();
    ns_keys[id] = key;
    ns.install_edge_key(id, key);
    e.bootstrap_registered(key);
    NameRecord rec;
    rec.edge_id = id;
    rec.name = e.name();
    rec.address = e.address();
    rec.x = e.x();
    rec.y = e.y();
    rec.capacity = e.capacity();
    REQUIRE(ns.register_direct(rec) == RegisterError::ok);
    return e;
  }

  NodeAgent& add_node(std::uint64_t id, Bytes image) {
    NodeProvision np;
    np.id = id;
    np.model = "sensor";
    np.psks[0] = rng.bytes16();
    np.fingerprint = fingerprint_of(static_cast<std::uint8_t>(EntityKind::Node), id,
                                    np.model, dir.fingerprint_salt);
    np.approved_digest = lw_hash(image);
    dir.nodes[id] = np;
    auto [it, inserted] = nodes.try_emplace(id, id, params, dir, rng, std::move(image));
    REQUIRE(inserted);
    return it->second;
  }

  Outbox dispatch(double now, const Frame& f) {
    if (f.receiver.kind == EntityKind::NameServer) return ns.handle_frame(now, f);
    if (f.receiver.kind == EntityKind::Edge) {
      return edges.at(f.receiver.id).handle_frame(now, f);
    }
    return nodes.at(f.receiver.id).handle_frame(now, f);
  }

  // Runs the exchange to quiescence, breadth first. Returns the `what`
  // of every note raised; delivered frames accumulate in `wire`.
  std::vector<std::string> pump(double now, Outbox first) {
    wire.clear();
    std::vector<std::string> notes;
    for (const Note& n : first.notes) notes.push_back(n.what);
    std::vector<Frame> queue = std::move(first.frames);
    while (!queue.empty()) {
      std::vector<Frame> next;
      for (const Frame& f : queue) {
        wire.push_back(f);
        Outbox r = dispatch(now, f);
        for (const Note& n : r.notes) notes.push_back(n.what);
        for (Frame& g : r.frames) next.push_back(std::move(g));
      }
      queue = std::move(next);
    }
    return notes;
  }

  std::vector<std::string> join(double now, std::uint64_t node_id,
                                std::uint64_t edge_id) {
    return pump(now, nodes.at(node_id).initiate_join(now, edge_id));
  }
};

std::size_t count_note(const std::vector<std::string>& notes, const std::string& what) {
  return static_cast<std::size_t>(std::count(notes.begin(), notes.end(), what));
}

const Frame* find_type(const std::vector<Frame>& wire, MsgType t) {
  auto it = std::find_if(wire.begin(), wire.end(),
                         [&](const Frame& f) { return f.type == t; });
  return it == wire.end() ? nullptr : &*it;
}

constexpr EntityRef node_ref(std::uint64_t id) { return {EntityKind::Node, id}; }
constexpr EntityRef edge_ref(std::uint64_t id) { return {EntityKind::Edge, id}; }

}  // namespace

TEST_CASE("join runs one challenge exchange and activates on the digest") {
  Bench b;
  b.add_edge(1, 0, 0, 4);
  b.bootstrap(1);
  NodeAgent& n = b.add_node(5, Bytes{1, 2, 3, 4});

  const auto notes = b.join(0.0, 5, 1);
  CHECK(count_note(notes, "challenge_issued") == 1);
  CHECK(count_note(notes, "challenge_answered") == 1);
  CHECK(count_note(notes, "auth_ok") == 1);
  CHECK(count_note(notes, "full_auth") == 1);
  CHECK(count_note(notes, "reconnect_ok") == 1);
  CHECK(count_note(notes, "connected") == 1);

  CHECK(n.phase() == NodeAgent::Phase::Connected);
  CHECK(n.current_edge() == std::optional<std::uint64_t>{1});
  REQUIRE(n.session_key() != nullptr);
  CHECK(n.counters().full_auths == 1);

  EdgeServer& e = b.edges.at(1);
  const EdgeServer::CacheEntry* ce = e.entry(5);
  REQUIRE(ce != nullptr);
  CHECK(ce->active);
  CHECK_FALSE(ce->shared);
  CHECK(ce->origin == EdgeServer::CacheEntry::Origin::Local);
  CHECK(ce->ttl == b.params.session_ttl);
  CHECK(ce->session_key == *n.session_key());
  CHECK(e.counters().full_auths == 1);
  CHECK(e.counters().challenges_issued == 1);
  CHECK(e.counters().cache_entries == 1);

  // Data flows over the established key.
  const auto dn = b.pump(1.0, n.send_data(1.0, Bytes{9, 9}));
  CHECK(count_note(dn, "data_ok") == 1);
  REQUIRE(e.delivered().size() == 1);
  CHECK(e.delivered()[0] == Bytes{9, 9});

  // A second join attempt while connected is refused locally.
  Outbox again = n.initiate_join(2.0, 1);
  CHECK(again.frames.empty());
  REQUIRE(again.notes.size() == 1);
  CHECK(again.notes[0].what == "join_ignored");
}

TEST_CASE("wrong pre-shared key draws strikes and then the denylist") {
  Bench b;
  EdgeServer& e = b.add_edge(1, 0, 0, 4);
  b.bootstrap(1);
  b.add_node(7, Bytes{1});

  NonceIssuer iss;
  auto bad_join = [&](std::uint32_t seq) {
    NodeJoinBody body;
    body.psk_index = 0;
    body.psk.fill(0xab);  // provisioned index, wrong bytes
    Frame f = make_frame(MsgType::NodeJoinRequest, node_ref(7), edge_ref(1), seq);
    seal_body(f, b.dir.domain_key, iss.issue(b.rng), encode_node_join(body));
    return f;
  };

  for (std::uint32_t i = 0; i < 2; ++i) {
    Outbox r = e.handle_frame(0.1, bad_join(i));
    REQUIRE(r.frames.size() == 1);
    CHECK(r.frames[0].type == MsgType::Reject);
    REQUIRE(decode_reject(r.frames[0].payload));
    CHECK(decode_reject(r.frames[0].payload)->reason == RejectReason::UnknownKey);
    CHECK(e.denylist().empty());
  }
  Outbox third = e.handle_frame(0.3, bad_join(2));
  REQUIRE(third.frames.size() == 1);
  CHECK(decode_reject(third.frames[0].payload)->reason == RejectReason::Denylisted);
  CHECK(e.denylist().count(node_ref(7)) == 1);
  CHECK(e.counters().denylist_size == 1);
  CHECK(e.counters().rejects_sent == 3);

  // Afterwards: silence, not even a reject.
  Outbox fourth = e.handle_frame(0.4, bad_join(3));
  CHECK(fourth.frames.empty());
  REQUIRE(fourth.notes.size() == 1);
  CHECK(fourth.notes[0].what == "denylisted_drop");
  CHECK(e.counters().rejects_sent == 3);
  CHECK(e.counters().challenges_issued == 0);
  CHECK(e.counters().full_auths == 0);
}

TEST_CASE("server joins get no strike budget") {
  Bench b;
  EdgeServer& e = b.add_edge(1, 0, 0, 4);
  b.bootstrap(1);

  ServerJoinBody body;
  body.psk_index = 0;
  body.psk.fill(0x11);
  body.announce = EdgeAnnounce{"rogue", "10.9.9.9", 5, 5, 4};
  NonceIssuer iss;
  Frame f = make_frame(MsgType::ServerJoinRequest, edge_ref(99), edge_ref(1), 0);
  seal_body(f, b.dir.domain_key, iss.issue(b.rng), encode_server_join(body));

  Outbox r = e.handle_frame(0.1, f);
  REQUIRE(r.frames.size() == 1);
  CHECK(decode_reject(r.frames[0].payload)->reason == RejectReason::Denylisted);
  CHECK(e.denylist().count(edge_ref(99)) == 1);

  Frame f2 = make_frame(MsgType::ServerJoinRequest, edge_ref(99), edge_ref(1), 1);
  seal_body(f2, b.dir.domain_key, iss.issue(b.rng), encode_server_join(body));
  Outbox r2 = e.handle_frame(0.2, f2);
  CHECK(r2.frames.empty());
  REQUIRE(r2.notes.size() == 1);
  CHECK(r2.notes[0].what == "denylisted_drop");
}

TEST_CASE("a stolen key without the matching identity fails the challenge") {
  Bench b;
  EdgeServer& e = b.add_edge(1, 0, 0, 4);
  b.bootstrap(1);
  b.add_node(7, Bytes{1});
  const SymmetricKey psk = b.dir.nodes.at(7).psks.at(0);

  NonceIssuer iss;
  Frame jf = make_frame(MsgType::NodeJoinRequest, node_ref(7), edge_ref(1), 0);
  seal_body(jf, b.dir.domain_key, iss.issue(b.rng), encode_node_join({0, psk}));
  Outbox c = e.handle_frame(0.1, jf);
  REQUIRE(c.frames.size() == 1);
  REQUIRE(c.frames[0].type == MsgType::Challenge);

  AeadOpenResult opened = open_body(c.frames[0], psk);
  REQUIRE(opened.ok());
  const auto cb = decode_challenge(*opened.pt);
  REQUIRE(cb);

  // Correct key, wrong fingerprint: the responder is not who the key
  // says it should be.
  DeviceFingerprint wrong{};
  wrong.fill(0x5a);
  Frame resp = make_frame(MsgType::ChallengeResponse, node_ref(7), edge_ref(1), 1);
  resp.payload = solve_challenge(psk, cb->challenge, wrong, iss.issue(b.rng));
  Outbox r = e.handle_frame(0.2, resp);
  REQUIRE(r.frames.size() == 1);
  CHECK(decode_reject(r.frames[0].payload)->reason == RejectReason::ChallengeFailed);
  CHECK(e.entry(7) == nullptr);
  CHECK(e.counters().full_auths == 0);
  CHECK(count_note({r.notes[0].what}, "auth_failed") == 1);
}

TEST_CASE("replayed frames land below the floor everywhere") {
  Bench b;
  EdgeServer& e = b.add_edge(1, 0, 0, 4);
  b.bootstrap(1);
  NodeAgent& n = b.add_node(5, Bytes{1, 2});

  b.join(0.0, 5, 1);
  std::vector<Frame> joined = b.wire;
  b.pump(1.0, n.send_data(1.0, Bytes{7}));
  const Frame* data = find_type(b.wire, MsgType::DataFrame);
  REQUIRE(data != nullptr);
  const Frame kept_data = *data;
  REQUIRE(e.delivered().size() == 1);

  const Frame* joinreq = find_type(joined, MsgType::NodeJoinRequest);
  const Frame* connack = find_type(joined, MsgType::ConnectAck);
  REQUIRE(joinreq != nullptr);
  REQUIRE(connack != nullptr);

  Outbox r1 = e.handle_frame(2.0, *joinreq);
  CHECK(r1.frames.empty());
  REQUIRE(r1.notes.size() == 1);
  CHECK(r1.notes[0].what == "replay_detected");

  Outbox r2 = e.handle_frame(2.1, kept_data);
  CHECK(r2.frames.empty());
  CHECK(r2.notes[0].what == "replay_detected");
  CHECK(e.delivered().size() == 1);
  CHECK(e.counters().replays_detected == 2);

  Outbox r3 = n.handle_frame(2.2, *connack);
  CHECK(r3.frames.empty());
  CHECK(r3.notes[0].what == "replay_detected");
  CHECK(n.counters().replays_detected == 1);
  CHECK(n.phase() == NodeAgent::Phase::Connected);

  // Stale handshake frames from a finished join are ignored, not acted on.
  const Frame* challenge = find_type(joined, MsgType::Challenge);
  REQUIRE(challenge != nullptr);
  Outbox r4 = n.handle_frame(2.3, *challenge);
  CHECK(r4.frames.empty());
  CHECK(r4.notes[0].what == "ignored");
  CHECK(n.phase() == NodeAgent::Phase::Connected);
}

TEST_CASE("a flipped bit is rejected and does not consume the sequence") {
  Bench b;
  EdgeServer& e = b.add_edge(1, 0, 0, 4);
  b.bootstrap(1);
  NodeAgent& n = b.add_node(5, Bytes{3});
  b.join(0.0, 5, 1);

  Outbox d = n.send_data(1.0, Bytes{1, 2, 3});
  REQUIRE(d.frames.size() == 1);
  Frame clean = d.frames[0];
  Frame bad = clean;
  bad.payload[kNonceLen + 1] ^= 0x01;

  Outbox r = e.handle_frame(1.0, bad);
  CHECK(r.frames.empty());
  REQUIRE(r.notes.size() == 1);
  CHECK(r.notes[0].what == "tamper_detected");
  CHECK(e.counters().tampers_detected == 1);
  CHECK(e.delivered().empty());

  // The tampered copy must not burn the seq: the honest original still lands.
  Outbox r2 = e.handle_frame(1.1, clean);
  REQUIRE(r2.notes.size() == 1);
  CHECK(r2.notes[0].what == "data_ok");
  CHECK(e.delivered().size() == 1);
}

TEST_CASE("session keys rotate on renewal and the old key dies") {
  Params p;
  p.session_ttl = 5.0;
  Bench b(p);
  EdgeServer& e = b.add_edge(1, 0, 0, 4);
  b.bootstrap(1);
  NodeAgent& n = b.add_node(5, Bytes{1});
  b.join(0.0, 5, 1);
  const SymmetricKey old_key = *n.session_key();

  CHECK(e.on_tick(4.0).frames.empty());
  Outbox t = e.on_tick(5.0);
  REQUIRE(t.frames.size() == 1);
  CHECK(t.frames[0].type == MsgType::KeyRenew);
  CHECK(e.entry(5)->renew_pending);

  Outbox nr = n.handle_frame(5.0, t.frames[0]);
  REQUIRE(nr.frames.size() == 1);
  CHECK(nr.frames[0].type == MsgType::KeyRenewConfirm);
  CHECK(count_note({nr.notes[0].what}, "key_renewed") == 1);
  CHECK_FALSE(*n.session_key() == old_key);

  Outbox er = e.handle_frame(5.1, nr.frames[0]);
  REQUIRE(er.notes.size() == 1);
  CHECK(er.notes[0].what == "key_renew_confirmed");
  CHECK_FALSE(e.entry(5)->renew_pending);
  CHECK(e.entry(5)->last_renewed == doctest::Approx(5.1));
  CHECK(e.entry(5)->session_key == *n.session_key());

  // Frames under the retired key are indistinguishable from tampering.
  NonceIssuer iss;
  Frame stale = make_frame(MsgType::DataFrame, node_ref(5), edge_ref(1), 50);
  seal_body(stale, old_key, iss.issue(b.rng), Bytes{9});
  Outbox sr = e.handle_frame(6.0, stale);
  CHECK(sr.notes[0].what == "tamper_detected");

  const auto dn = b.pump(6.5, n.send_data(6.5, Bytes{4}));
  CHECK(count_note(dn, "data_ok") == 1);
}

TEST_CASE("an unanswered renewal evicts the entry") {
  Params p;
  p.session_ttl = 5.0;
  Bench b(p);
  EdgeServer& e = b.add_edge(1, 0, 0, 4);
  b.bootstrap(1);
  NodeAgent& n = b.add_node(5, Bytes{1});
  b.join(0.0, 5, 1);

  Outbox t = e.on_tick(5.0);
  REQUIRE(t.frames.size() == 1);  // KeyRenew, withheld from the node
  CHECK(e.on_tick(7.9).frames.empty());
  Outbox gone = e.on_tick(8.0);
  CHECK(count_note({gone.notes[0].what}, "renew_timeout") == 1);
  CHECK(e.entry(5) == nullptr);
  CHECK(e.counters().cache_entries == 0);

  // The node never saw the renewal; its data now falls on deaf ears.
  Outbox d = n.send_data(9.0, Bytes{1});
  REQUIRE(d.frames.size() == 1);
  Outbox r = e.handle_frame(9.0, d.frames[0]);
  CHECK(r.notes[0].what == "orphan_drop");
}

TEST_CASE("capacity refuses joiners at both admission points") {
  Bench b;
  EdgeServer& e = b.add_edge(1, 0, 0, 1);
  b.bootstrap(1);
  b.add_node(5, Bytes{1});
  NodeAgent& n6 = b.add_node(6, Bytes{2});

  SUBCASE("full cache rejects before the challenge") {
    b.join(0.0, 5, 1);
    const auto notes = b.join(1.0, 6, 1);
    CHECK(count_note(notes, "capacity_exceeded") == 1);
    CHECK(count_note(notes, "challenge_issued") == 0);
    CHECK(count_note(notes, "rejected") == 1);
    CHECK(n6.phase() == NodeAgent::Phase::Idle);
    CHECK(e.entry(6) == nullptr);
    CHECK(e.counters().rejects_sent == 1);
  }

  SUBCASE("a slot that fills mid-handshake rejects at the response") {
    // Node 6's challenge goes out while the cache is empty; node 5 then
    // takes the only slot before 6's response arrives.
    Outbox j6 = n6.initiate_join(0.0, 1);
    Outbox c6 = e.handle_frame(0.0, j6.frames[0]);
    REQUIRE(c6.frames.size() == 1);
    Outbox resp6 = n6.handle_frame(0.0, c6.frames[0]);
    REQUIRE(resp6.frames.size() == 1);

    b.join(0.5, 5, 1);
    REQUIRE(e.entry(5) != nullptr);

    const std::uint64_t auths_before = e.counters().full_auths;
    Outbox r = e.handle_frame(1.0, resp6.frames[0]);
    REQUIRE(r.frames.size() == 1);
    CHECK(r.frames[0].type == MsgType::Reject);
    CHECK(decode_reject(r.frames[0].payload)->reason == RejectReason::CapacityExceeded);
    CHECK(e.counters().full_auths == auths_before);
    CHECK(e.entry(6) == nullptr);

    Outbox nr = n6.handle_frame(1.0, r.frames[0]);
    CHECK(count_note({nr.notes[0].what}, "rejected") == 1);
    CHECK(n6.phase() == NodeAgent::Phase::Idle);
    CHECK(n6.counters().full_auths == 0);
  }
}

TEST_CASE("a fresh authentication supersedes leftover session state") {
  Bench b;
  EdgeServer& e = b.add_edge(1, 0, 0, 1);
  b.bootstrap(1);
  b.add_node(5, Bytes{1});
  b.join(0.0, 5, 1);
  REQUIRE(e.entry(5) != nullptr);

  // A brand-new join from the same node clears the old entry first, so
  // it cannot trip the capacity check against itself.
  NonceIssuer iss;
  Frame jf = make_frame(MsgType::NodeJoinRequest, node_ref(5), edge_ref(1), 10);
  seal_body(jf, b.dir.domain_key, iss.issue(b.rng),
            encode_node_join({0, b.dir.nodes.at(5).psks.at(0)}));
  Outbox r = e.handle_frame(1.0, jf);
  REQUIRE(r.frames.size() == 1);
  CHECK(r.frames[0].type == MsgType::Challenge);
  std::vector<std::string> whats;
  for (const Note& note : r.notes) whats.push_back(note.what);
  CHECK(count_note(whats, "superseded") == 1);
  CHECK(count_note(whats, "challenge_issued") == 1);
  CHECK(e.entry(5) == nullptr);
  CHECK(e.counters().challenges_issued == 2);
}

TEST_CASE("rejects only count in the phase they belong to") {
  Bench b;
  EdgeServer& e = b.add_edge(1, 0, 0, 4);
  b.bootstrap(1);
  NodeAgent& n = b.add_node(5, Bytes{1});
  b.join(0.0, 5, 1);

  SUBCASE("plaintext reject bounces off a connected node") {
    Frame f = make_frame(MsgType::Reject, edge_ref(1), node_ref(5), 30);
    f.payload = encode_reject({RejectReason::UnknownKey});
    Outbox r = n.handle_frame(1.0, f);
    CHECK(r.notes[0].what == "ignored");
    CHECK(n.phase() == NodeAgent::Phase::Connected);
    CHECK(n.session_key() != nullptr);
  }

  SUBCASE("sealed reject under the session key tears the session down") {
    NonceIssuer iss;
    Frame f = make_frame(MsgType::Reject, edge_ref(1), node_ref(5), 30);
    seal_body(f, e.entry(5)->session_key, iss.issue(b.rng),
              encode_reject({RejectReason::DigestMismatch}));
    Outbox r = n.handle_frame(1.0, f);
    CHECK(r.notes[0].what == "rejected");
    CHECK(n.phase() == NodeAgent::Phase::Idle);
    CHECK(n.session_key() == nullptr);
  }

  SUBCASE("sealed reject under a junk key is ignored") {
    NonceIssuer iss;
    SymmetricKey junk{};
    junk.fill(0x42);
    Frame f = make_frame(MsgType::Reject, edge_ref(1), node_ref(5), 30);
    seal_body(f, junk, iss.issue(b.rng), encode_reject({RejectReason::Denylisted}));
    Outbox r = n.handle_frame(1.0, f);
    CHECK(r.notes[0].what == "ignored");
    CHECK(n.phase() == NodeAgent::Phase::Connected);
  }

  SUBCASE("plaintext reject lands during a join") {
    NodeAgent& n2 = b.add_node(6, Bytes{2});
    Outbox j = n2.initiate_join(1.0, 1);
    REQUIRE(j.frames.size() == 1);
    CHECK(n2.phase() == NodeAgent::Phase::Joining);
    Frame f = make_frame(MsgType::Reject, edge_ref(1), node_ref(6), 0);
    f.payload = encode_reject({RejectReason::CapacityExceeded});
    Outbox r = n2.handle_frame(1.1, f);
    CHECK(r.notes[0].what == "rejected");
    CHECK(n2.phase() == NodeAgent::Phase::Idle);
  }
}

TEST_CASE("the digest gate tracks the image, not the session") {
  Bench b;
  EdgeServer& e = b.add_edge(1, 0, 0, 4);
  b.bootstrap(1);
  NodeAgent& n = b.add_node(5, Bytes{10, 20, 30});
  b.join(0.0, 5, 1);

  n.corrupt_app_image(1);
  NonceIssuer iss;
  SeqTracker seqs;
  auto reconnect = [&](std::uint32_t seq) {
    ReconnectBody rb;
    rb.digest = n.code_signature();
    rb.fresh_nonce = iss.issue(b.rng);
    Frame f = make_frame(MsgType::ReconnectRequest, node_ref(5), edge_ref(1), seq);
    seal_body(f, e.entry(5)->session_key, iss.issue(b.rng), encode_reconnect(rb));
    return f;
  };

  Outbox r = e.handle_frame(1.0, reconnect(20));
  REQUIRE(r.frames.size() == 1);
  CHECK(r.frames[0].type == MsgType::Reject);
  AeadOpenResult opened = open_body(r.frames[0], e.entry(5)->session_key);
  REQUIRE(opened.ok());
  CHECK(decode_reject(*opened.pt)->reason == RejectReason::DigestMismatch);
  CHECK(r.notes[0].what == "digest_mismatch");
  CHECK_FALSE(e.entry(5)->active);

  // Inactive entries stop serving data.
  Outbox d = n.send_data(1.5, Bytes{1});
  Outbox dr = e.handle_frame(1.5, d.frames[0]);
  CHECK(dr.notes[0].what == "inactive_drop");

  // Restoring the image (the corruption is an involution) re-passes the gate.
  n.corrupt_app_image(1);
  Outbox ok = e.handle_frame(2.0, reconnect(21));
  REQUIRE(ok.frames.size() == 1);
  CHECK(ok.frames[0].type == MsgType::ConnectAck);
  CHECK(ok.notes[0].what == "reconnect_ok");
  CHECK(e.entry(5)->active);
}

TEST_CASE("migration moves the key without a second ceremony") {
  Bench b;
  b.add_edge(1, 0, 0, 8);
  b.add_edge(2, 1000, 0, 8);
  b.bootstrap(1);
  b.bootstrap(2);
  NodeAgent& n = b.add_node(5, Bytes{1, 2, 3});
  b.join(0.0, 5, 1);
  const SymmetricKey key_before = *n.session_key();

  EdgeServer& e1 = b.edges.at(1);
  EdgeServer& e2 = b.edges.at(2);
  const auto notes = b.pump(10.0, e1.initiate_handoff(10.0, 5, 900, 0));

  CHECK(count_note(notes, "recommended") == 1);
  CHECK(count_note(notes, "handoff_started") == 1);
  CHECK(count_note(notes, "transfer_accepted") == 1);
  CHECK(count_note(notes, "handoff_acked") == 1);
  CHECK(count_note(notes, "migrating") == 1);
  CHECK(count_note(notes, "handoff_activated") == 1);
  CHECK(count_note(notes, "handoff_complete") == 1);
  CHECK(count_note(notes, "challenge_issued") == 0);

  // No challenge traffic crossed the wire during the move.
  CHECK(find_type(b.wire, MsgType::Challenge) == nullptr);
  CHECK(find_type(b.wire, MsgType::ChallengeResponse) == nullptr);

  CHECK(n.phase() == NodeAgent::Phase::Connected);
  CHECK(n.current_edge() == std::optional<std::uint64_t>{2});
  CHECK(n.counters().full_auths == 1);
  CHECK(n.counters().handoffs_completed == 1);
  CHECK(*n.session_key() == key_before);

  const EdgeServer::CacheEntry* src = e1.entry(5);
  REQUIRE(src != nullptr);
  CHECK(src->shared);
  const EdgeServer::CacheEntry* dst = e2.entry(5);
  REQUIRE(dst != nullptr);
  CHECK(dst->active);
  CHECK(dst->origin == EdgeServer::CacheEntry::Origin::Migrated);
  CHECK(dst->session_key == key_before);
  // Remaining lifetime transferred: created at t=10 with 590 s left on a
  // 600 s ttl, so the age baseline backdates to the original join.
  CHECK(dst->last_renewed == doctest::Approx(0.0));
  CHECK(e1.counters().handoffs_completed == 1);
  CHECK(e2.counters().handoffs_completed == 1);
  CHECK(e2.counters().challenges_issued == 0);

  // Data now lands at the new edge.
  const auto dn = b.pump(11.0, n.send_data(11.0, Bytes{5}));
  CHECK(count_note(dn, "data_ok") == 1);
  CHECK(e2.delivered().size() == 1);
  CHECK(e1.delivered().empty());

  // The shared source copy ages out instead of renewing.
  Outbox sweep = e1.on_tick(600.0);
  std::vector<std::string> whats;
  for (const Note& note : sweep.notes) whats.push_back(note.what);
  CHECK(count_note(whats, "expired_shared") == 1);
  CHECK(e1.entry(5) == nullptr);
}

TEST_CASE("baseline tears down and reruns the full ceremony") {
  Bench b;
  b.add_edge(1, 0, 0, 8, Mode::BaselineReauth);
  b.add_edge(2, 1000, 0, 8, Mode::BaselineReauth);
  b.bootstrap(1);
  b.bootstrap(2);
  NodeAgent& n = b.add_node(5, Bytes{1, 2, 3});
  b.join(0.0, 5, 1);
  const SymmetricKey key_before = *n.session_key();

  EdgeServer& e1 = b.edges.at(1);
  EdgeServer& e2 = b.edges.at(2);
  const auto notes = b.pump(10.0, e1.initiate_handoff(10.0, 5, 900, 0));

  CHECK(count_note(notes, "baseline_rejoin") == 1);
  CHECK(count_note(notes, "disconnected") == 1);
  CHECK(count_note(notes, "challenge_issued") == 1);
  CHECK(count_note(notes, "full_auth") == 1);
  CHECK(count_note(notes, "handoff_complete") == 0);
  CHECK(count_note(notes, "handoff_activated") == 0);

  CHECK(n.phase() == NodeAgent::Phase::Connected);
  CHECK(n.current_edge() == std::optional<std::uint64_t>{2});
  CHECK(n.counters().full_auths == 2);
  CHECK(n.counters().handoffs_completed == 0);
  CHECK_FALSE(*n.session_key() == key_before);

  CHECK(e1.entry(5) == nullptr);
  const EdgeServer::CacheEntry* dst = e2.entry(5);
  REQUIRE(dst != nullptr);
  CHECK(dst->active);
  CHECK(dst->origin == EdgeServer::CacheEntry::Origin::Local);
  CHECK(e2.counters().challenges_issued == 1);
}

TEST_CASE("a handoff ticket is single use") {
  Bench b;
  b.add_edge(1, 0, 0, 8);
  b.add_edge(2, 1000, 0, 8);
  b.bootstrap(1);
  b.bootstrap(2);
  b.add_node(5, Bytes{1});
  b.join(0.0, 5, 1);
  b.pump(10.0, b.edges.at(1).initiate_handoff(10.0, 5, 900, 0));

  const Frame* xfer = find_type(b.wire, MsgType::HandoffTransfer);
  REQUIRE(xfer != nullptr);
  EdgeServer& e2 = b.edges.at(2);
  const std::uint64_t replays_before = e2.counters().replays_detected;

  // Byte-exact replay dies at the sequence floor.
  Outbox r1 = e2.handle_frame(20.0, *xfer);
  CHECK(r1.notes[0].what == "replay_detected");

  // A fresh frame quoting the spent ticket dies at the one-shot check,
  // even under the correct transfer key.
  ChallengeNonce n1{};
  ChallengeNonce n2{};
  std::copy_n(xfer->payload.begin(), kNonceLen, n1.begin());
  std::copy_n(xfer->payload.begin() + kNonceLen, kNonceLen, n2.begin());
  const SymmetricKey k_ab = derive_session_key(b.ns_keys.at(2), n1, n2);

  HandoffInner inner;
  inner.node_id = 5;
  inner.session_key.fill(0x77);
  inner.app_digest.fill(0x88);
  inner.ttl_remaining = 400.0;
  NonceIssuer iss;
  const ChallengeNonce nn = iss.issue(b.rng);
  Frame f2 = make_frame(MsgType::HandoffTransfer, edge_ref(1), edge_ref(2),
                        xfer->seq + 7);
  const Bytes ct = aead_seal(k_ab, nn, header_aad(f2), encode_handoff_inner(inner));
  f2.payload.assign(n1.begin(), n1.end());
  f2.payload.insert(f2.payload.end(), n2.begin(), n2.end());
  f2.payload.insert(f2.payload.end(), nn.begin(), nn.end());
  f2.payload.insert(f2.payload.end(), ct.begin(), ct.end());

  Outbox r2 = e2.handle_frame(20.1, f2);
  CHECK(r2.frames.empty());
  CHECK(r2.notes[0].what == "replay_detected");
  CHECK(e2.counters().replays_detected == replays_before + 2);
  // The planted key never entered the cache.
  REQUIRE(e2.entry(5) != nullptr);
  CHECK_FALSE(e2.entry(5)->session_key == inner.session_key);
}

TEST_CASE("no recommendation leaves the entry serving locally") {
  Bench b;
  EdgeServer& e = b.add_edge(1, 0, 0, 8);
  b.bootstrap(1);
  b.add_node(5, Bytes{1});
  b.join(0.0, 5, 1);

  const auto notes = b.pump(10.0, e.initiate_handoff(10.0, 5, 900, 0));
  CHECK(count_note(notes, "no_recommendation") == 1);
  CHECK(count_note(notes, "recommend_none") == 1);
  REQUIRE(e.entry(5) != nullptr);
  CHECK(e.entry(5)->active);
  CHECK_FALSE(e.entry(5)->shared);

  // The slot is free again: a later attempt asks again instead of
  // reporting one in progress.
  Outbox again = e.initiate_handoff(11.0, 5, 900, 0);
  REQUIRE(again.notes.size() == 1);
  CHECK(again.notes[0].what == "recommend_requested");
}

TEST_CASE("stale protocol state is swept on ticks") {
  Bench b;
  b.add_edge(1, 0, 0, 8);
  b.add_edge(2, 1000, 0, 8);
  b.bootstrap(1);
  b.bootstrap(2);
  NodeAgent& n = b.add_node(5, Bytes{1});
  EdgeServer& e1 = b.edges.at(1);
  EdgeServer& e2 = b.edges.at(2);

  SUBCASE("an unanswered challenge expires") {
    Outbox j = n.initiate_join(0.0, 1);
    Outbox c = e1.handle_frame(0.0, j.frames[0]);
    REQUIRE(c.frames.size() == 1);
    Outbox resp = n.handle_frame(0.0, c.frames[0]);
    REQUIRE(resp.frames.size() == 1);

    Outbox t = e1.on_tick(3.0);
    std::vector<std::string> whats;
    for (const Note& note : t.notes) whats.push_back(note.what);
    CHECK(count_note(whats, "challenge_timeout") == 1);

    Outbox late = e1.handle_frame(3.1, resp.frames[0]);
    CHECK(late.frames.empty());
    CHECK(late.notes[0].what == "ignored");
    CHECK(e1.counters().full_auths == 0);
  }

  SUBCASE("a lost recommendation frees the slot") {
    b.join(0.0, 5, 1);
    Outbox ho = e1.initiate_handoff(10.0, 5, 900, 0);
    REQUIRE(ho.frames.size() == 1);  // withheld from the name server
    Outbox t = e1.on_tick(13.0);
    std::vector<std::string> whats;
    for (const Note& note : t.notes) whats.push_back(note.what);
    CHECK(count_note(whats, "recommend_timeout") == 1);
    Outbox again = e1.initiate_handoff(13.5, 5, 900, 0);
    CHECK(again.notes[0].what == "recommend_requested");
  }

  SUBCASE("a lost transfer times out and the shared copy ages away") {
    b.join(0.0, 5, 1);
    Outbox ho = e1.initiate_handoff(10.0, 5, 900, 0);
    Outbox nsr = b.ns.handle_frame(10.0, ho.frames[0]);
    REQUIRE(nsr.frames.size() == 1);
    Outbox er = e1.handle_frame(10.0, nsr.frames[0]);
    // HandoffTransfer and Disconnect both withheld.
    REQUIRE(er.frames.size() == 2);
    REQUIRE(e1.entry(5) != nullptr);
    CHECK(e1.entry(5)->shared);

    Outbox t = e1.on_tick(13.0);
    std::vector<std::string> whats;
    for (const Note& note : t.notes) whats.push_back(note.what);
    CHECK(count_note(whats, "handoff_timeout") == 1);

    Outbox sweep = e1.on_tick(600.0);
    whats.clear();
    for (const Note& note : sweep.notes) whats.push_back(note.what);
    CHECK(count_note(whats, "expired_shared") == 1);
    CHECK(e1.entry(5) == nullptr);
  }

  SUBCASE("a reconnect that beat its transfer is parked then dropped") {
    NonceIssuer iss;
    Frame f = make_frame(MsgType::ReconnectRequest, node_ref(5), edge_ref(2), 3);
    SymmetricKey anykey{};
    anykey.fill(0x21);
    seal_body(f, anykey, iss.issue(b.rng), Bytes(48, 0));
    Outbox r = e2.handle_frame(5.0, f);
    CHECK(r.notes[0].what == "reconnect_stashed");
    Outbox t = e2.on_tick(8.0);
    std::vector<std::string> whats;
    for (const Note& note : t.notes) whats.push_back(note.what);
    CHECK(count_note(whats, "reconnect_timeout") == 1);
  }
}

TEST_CASE("renewal and migration refuse to race each other") {
  Params p;
  p.session_ttl = 5.0;
  Bench b(p);
  b.add_edge(1, 0, 0, 8);
  b.add_edge(2, 1000, 0, 8);
  b.bootstrap(1);
  b.bootstrap(2);
  b.add_node(5, Bytes{1});
  EdgeServer& e1 = b.edges.at(1);

  SUBCASE("an expired entry defers renewal while a move is pending") {
    b.join(0.0, 5, 1);
    Outbox ho = e1.initiate_handoff(6.0, 5, 900, 0);
    REQUIRE(ho.frames.size() == 1);
    Outbox t = e1.on_tick(6.0);
    CHECK(t.frames.empty());  // no KeyRenew while the recommendation is out
    REQUIRE(e1.entry(5) != nullptr);
    CHECK_FALSE(e1.entry(5)->renew_pending);
  }

  SUBCASE("a pending renewal blocks the handoff") {
    b.join(0.0, 5, 1);
    Outbox t = e1.on_tick(5.0);
    REQUIRE(t.frames.size() == 1);  // KeyRenew in flight
    Outbox ho = e1.initiate_handoff(5.5, 5, 900, 0);
    CHECK(ho.frames.empty());
    CHECK(ho.notes[0].what == "handoff_ignored");
  }
}

TEST_CASE("an edge registers through a sponsor and then serves") {
  Bench b;
  b.add_edge(1, 0, 0, 8);
  b.add_edge(2, 1000, 0, 8);
  b.bootstrap(1);
  EdgeServer& e1 = b.edges.at(1);
  EdgeServer& e2 = b.edges.at(2);
  CHECK_FALSE(e2.registered());

  const auto notes = b.pump(0.0, e2.initiate_register(0.0, 1));
  CHECK(count_note(notes, "challenge_issued") == 1);
  CHECK(count_note(notes, "challenge_answered") == 1);
  CHECK(count_note(notes, "auth_ok") == 1);
  CHECK(count_note(notes, "full_auth") == 1);
  CHECK(count_note(notes, "registered") == 1);
  CHECK(count_note(notes, "edge_registered") == 1);
  CHECK(count_note(notes, "register_confirmed") == 1);
  CHECK(count_note(notes, "register_forwarded") == 1);

  CHECK(e2.registered());
  CHECK(b.ns.has_edge_key(2));
  REQUIRE(b.ns.registry().count(2) == 1);
  CHECK(b.ns.registry().at(2).authenticated_by == 1);
  CHECK(e1.counters().full_auths == 1);
  CHECK(e2.counters().full_auths == 1);

  // Re-registration is refused locally.
  Outbox again = e2.initiate_register(1.0, 1);
  CHECK(again.frames.empty());
  CHECK(again.notes[0].what == "register_ignored");

  // The registration frame cannot be replayed at the name server.
  const Frame* reg = find_type(b.wire, MsgType::RegisterEdge);
  REQUIRE(reg != nullptr);
  Outbox rr = b.ns.handle_frame(1.0, *reg);
  CHECK(rr.notes[0].what == "replay_detected");
  CHECK(b.ns.counters().replays_detected == 1);

  // The newcomer can serve nodes and run migrations like any peer.
  NodeAgent& n = b.add_node(5, Bytes{1});
  const auto jn = b.join(2.0, 5, 2);
  CHECK(count_note(jn, "connected") == 1);
  const auto hn = b.pump(3.0, e2.initiate_handoff(3.0, 5, 100, 0));
  CHECK(count_note(hn, "handoff_complete") == 1);
  CHECK(n.current_edge() == std::optional<std::uint64_t>{1});
  CHECK(n.counters().full_auths == 1);
}

TEST_CASE("the name server only talks to keyed edges") {
  Bench b;
  b.add_edge(1, 0, 0, 8);
  b.bootstrap(1);

  Frame f = make_frame(MsgType::RecommendRequest, edge_ref(42), kNameServerRef, 0);
  f.payload = Bytes(48, 1);
  Outbox r = b.ns.handle_frame(0.0, f);
  CHECK(r.frames.empty());
  CHECK(r.notes[0].what == "ignored");

  Frame g = make_frame(MsgType::RecommendRequest, node_ref(5), kNameServerRef, 0);
  g.payload = Bytes(48, 1);
  Outbox r2 = b.ns.handle_frame(0.0, g);
  CHECK(r2.frames.empty());
  CHECK(r2.notes[0].what == "ignored");

  // A keyed edge sending garbage under the wrong key is a tamper event.
  NonceIssuer iss;
  SymmetricKey junk{};
  junk.fill(0x0f);
  Frame h = make_frame(MsgType::RecommendRequest, edge_ref(1), kNameServerRef, 0);
  seal_body(h, junk, iss.issue(b.rng), Bytes(8, 2));
  Outbox r3 = b.ns.handle_frame(0.0, h);
  CHECK(r3.frames.empty());
  CHECK(r3.notes[0].what == "tamper_detected");
  CHECK(b.ns.counters().tampers_detected == 1);
}

TEST_CASE("frames from the wrong neighbourhood are ignored") {
  Bench b;
  b.add_edge(1, 0, 0, 8);
  b.add_edge(2, 1000, 0, 8);
  b.bootstrap(1);
  b.bootstrap(2);
  NodeAgent& n = b.add_node(5, Bytes{1});
  b.join(0.0, 5, 1);
  EdgeServer& e1 = b.edges.at(1);
  const SymmetricKey session = e1.entry(5)->session_key;
  NonceIssuer iss;

  // A Disconnect from an edge the node is not attached to, even under
  // the right key, does not move the node.
  Frame d = make_frame(MsgType::Disconnect, edge_ref(2), node_ref(5), 0);
  DisconnectBody db;
  db.directive = DisconnectBody::Directive::Migrate;
  db.target = 2;
  seal_body(d, session, iss.issue(b.rng), encode_disconnect(db));
  Outbox r = n.handle_frame(1.0, d);
  CHECK(r.frames.empty());
  CHECK(r.notes[0].what == "ignored");
  CHECK(n.phase() == NodeAgent::Phase::Connected);
  CHECK(n.current_edge() == std::optional<std::uint64_t>{1});

  // Data claiming to come from an edge is not data.
  Frame dd = make_frame(MsgType::DataFrame, edge_ref(2), edge_ref(1), 0);
  seal_body(dd, session, iss.issue(b.rng), Bytes{1});
  Outbox r2 = e1.handle_frame(1.1, dd);
  CHECK(r2.notes[0].what == "ignored");

  // Data from a node nobody knows is an orphan.
  Frame od = make_frame(MsgType::DataFrame, node_ref(9), edge_ref(1), 0);
  seal_body(od, session, iss.issue(b.rng), Bytes{1});
  Outbox r3 = e1.handle_frame(1.2, od);
  CHECK(r3.notes[0].what == "orphan_drop");

  // Nodes ignore message types outside their half of the protocol.
  Frame rr = make_frame(MsgType::RecommendRequest, edge_ref(1), node_ref(5), 9);
  seal_body(rr, session, iss.issue(b.rng), Bytes(8, 0));
  Outbox r4 = n.handle_frame(1.3, rr);
  CHECK(r4.frames.empty());
  CHECK(r4.notes[0].what == "ignored");
}

TEST_CASE("delivery-ratio windows raise and clear jamming alerts") {
  Params p;
  p.pdr_window = 10;
  p.pdr_threshold = 0.5;
  Bench b(p);
  EdgeServer& e = b.add_edge(1, 0, 0, 8);
  b.bootstrap(1);
  NodeAgent& n = b.add_node(5, Bytes{1});
  b.join(0.0, 5, 1);

  // The node emits seq 3,4,5,... toward the edge (0..2 went to the join).
  std::vector<Frame> frames;
  for (int i = 0; i < 22; ++i) {
    Outbox d = n.send_data(1.0, Bytes{static_cast<std::uint8_t>(i)});
    REQUIRE(d.frames.size() == 1);
    frames.push_back(d.frames[0]);
  }

  // Deliver every fourth frame: expected counts the seq gaps, so the
  // first full window evaluates at 3 of 12 delivered.
  std::vector<std::string> whats;
  for (const std::size_t idx : {3u, 7u, 11u}) {
    Outbox r = e.handle_frame(2.0, frames[idx]);
    for (const Note& note : r.notes) whats.push_back(note.what);
  }
  CHECK(count_note(whats, "jamming_suspected") == 1);
  CHECK(e.counters().jamming_alerts == 1);

  // A healthy follow-up window evaluates clean and raises nothing.
  whats.clear();
  for (std::size_t idx = 12; idx < 22; ++idx) {
    Outbox r = e.handle_frame(3.0, frames[idx]);
    for (const Note& note : r.notes) whats.push_back(note.what);
  }
  CHECK(count_note(whats, "jamming_suspected") == 0);
  CHECK(count_note(whats, "data_ok") == 10);
  CHECK(e.counters().jamming_alerts == 1);
}
