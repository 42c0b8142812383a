#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "miot/bytes.hpp"
#include "miot/crypto.hpp"
#include "miot/frame.hpp"
#include "miot/messages.hpp"
#include "miot/metrics.hpp"
#include "miot/params.hpp"
#include "miot/provisioning.hpp"
#include "miot/rng.hpp"
#include "miot/session.hpp"

namespace miot {

// Serving tier. Authenticates joiners against the provisioning directory,
// keeps per-node session state, migrates that state to a peer when the
// name server recommends one, and watches per-node delivery ratios.
class EdgeServer {
 public:
  struct CacheEntry {
    enum class Origin : std::uint8_t { Local, Migrated };

    std::uint64_t node_id = 0;
    SymmetricKey session_key{};
    AppDigest app_digest{};
    double created_at = 0.0;
    // Age is measured from here; a migrated entry is backdated so the
    // remaining lifetime transfers with the key.
    double last_renewed = 0.0;
    double ttl = 0.0;
    bool active = false;   // digest presented and accepted
    bool shared = false;   // handed to a peer; expires here, never renewed
    Origin origin = Origin::Local;

    bool renew_pending = false;
    ChallengeNonce renew_nonce{};
    double renew_deadline = 0.0;

    // Delivery accounting between window evaluations.
    std::int64_t last_seen_seq = -1;
    std::uint64_t pdr_expected = 0;
    std::uint64_t pdr_delivered = 0;
  };

  EdgeServer(std::uint64_t id, const Params& params, Mode mode,
             const ProvisioningDirectory& dir, DetRng& rng, std::string name,
             std::string address, double x, double y, std::uint32_t capacity);

  // Bootstrap registration: key installed out of band, no protocol run.
  void bootstrap_registered(const SymmetricKey& ns_key);

  // Registers through an already registered peer; full challenge-response.
  Outbox initiate_register(double now, std::uint64_t via_edge);

  // Called when the serving node moved outside coverage; asks the name
  // server where to send it.
  Outbox initiate_handoff(double now, std::uint64_t node_id, double node_x,
                          double node_y);

  Outbox handle_frame(double now, const Frame& f);
  Outbox on_tick(double now);

  EntityRef ref() const { return self_; }
  const std::string& name() const { return name_; }
  const std::string& address() const { return address_; }
  double x() const { return x_; }
  double y() const { return y_; }
  std::uint32_t capacity() const { return capacity_; }
  bool registered() const { return registered_; }
  const std::map<std::uint64_t, CacheEntry>& cache() const { return cache_; }
  const std::set<EntityRef>& denylist() const { return denylist_; }
  Counters& counters() { return counters_; }
  const Counters& counters() const { return counters_; }
  const std::vector<Bytes>& delivered() const { return delivered_; }
  const CacheEntry* entry(std::uint64_t node_id) const;

  /// Invariant-check support: plants an entry without any protocol run.
  void test_inject_entry(const CacheEntry& e) {
    cache_[e.node_id] = e;
    sync_gauges();
  }

 private:
  struct PendingChallenge {
    ChallengeNonce challenge{};
    std::uint16_t psk_index = 0;
    SymmetricKey psk{};
    bool server_flavor = false;
    std::optional<EdgeAnnounce> announce;
    double issued_at = 0.0;
  };

  struct RegPending {
    std::uint64_t via_edge = 0;
    std::uint16_t psk_index = 0;
    SymmetricKey psk{};
    SymmetricKey candidate{};
    bool key_derived = false;
  };

  struct PendingHandoff {
    std::uint64_t target = 0;
    SymmetricKey transfer_key{};
    double deadline = 0.0;
  };

  struct StashedReconnect {
    Frame frame;
    double deadline = 0.0;
  };

  Outbox on_node_join(double now, const Frame& f);
  Outbox on_server_join(double now, const Frame& f);
  Outbox on_challenge_response(double now, const Frame& f);
  Outbox on_reg_challenge(double now, const Frame& f);
  Outbox on_reg_auth_ack(double now, const Frame& f);
  Outbox on_register_ack(double now, const Frame& f);
  Outbox on_recommend_reply(double now, const Frame& f);
  Outbox on_handoff_transfer(double now, const Frame& f);
  Outbox on_handoff_ack(double now, const Frame& f);
  Outbox on_reconnect(double now, const Frame& f);
  Outbox on_data(double now, const Frame& f);
  Outbox on_key_renew_confirm(double now, const Frame& f);
  Outbox on_reject_frame(double now, const Frame& f);

  // Runs the digest gate against an existing entry; emits ConnectAck or a
  // sealed DigestMismatch reject.
  void activate_entry(double now, const Frame& f, CacheEntry& e, Outbox& out);

  Frame plain_reject(EntityRef to, RejectReason reason);
  Frame sealed_frame(MsgType t, EntityRef to, const SymmetricKey& key,
                     ByteSpan body);
  // Records a failed join attempt; returns the reject to send, entering the
  // denylist when the strike budget is spent. Server joins get no budget.
  Frame strike(EntityRef who, RejectReason reason, bool server_flavor,
               Outbox& out);
  void add_denylist(EntityRef who, Outbox& out);
  void erase_entry(std::uint64_t node_id);
  void sync_gauges();

  EntityRef self_;
  Params params_;
  Mode mode_;
  const ProvisioningDirectory& dir_;
  const EdgeProvision& prov_;
  DetRng& rng_;

  std::string name_;
  std::string address_;
  double x_ = 0.0;
  double y_ = 0.0;
  std::uint32_t capacity_ = 0;

  bool registered_ = false;
  std::optional<SymmetricKey> ns_key_;
  std::optional<RegPending> reg_pending_;

  std::map<std::uint64_t, CacheEntry> cache_;
  std::map<EntityRef, PendingChallenge> pending_challenges_;
  std::map<std::uint64_t, double> pending_reco_;          // node id -> deadline
  std::map<std::uint64_t, PendingHandoff> pending_handoff_;
  std::map<std::uint64_t, StashedReconnect> stashed_reconnects_;
  std::set<Bytes> used_tickets_;
  std::map<EntityRef, std::uint32_t> strikes_;
  std::set<EntityRef> denylist_;
  std::vector<Bytes> delivered_;

  Counters counters_;
  CryptoMeter meter_{counters_};
  NonceIssuer issuer_;
  SeqTracker seq_;
  ReplayFloor floors_;
};

}  // namespace miot
