#pragma once

#include <cstdint>
#include <optional>

#include "miot/crypto.hpp"
#include "miot/messages.hpp"
#include "miot/metrics.hpp"
#include "miot/params.hpp"
#include "miot/provisioning.hpp"
#include "miot/rng.hpp"
#include "miot/session.hpp"

namespace miot {

/// Mobile node agent. Holds at most one session key; performs the full
/// challenge exchange once per join and never during migration.
class NodeAgent {
 public:
  enum class Phase { Idle, Joining, AwaitingAck, Connected, Reconnecting };

  NodeAgent(std::uint64_t id, const Params& params, const ProvisioningDirectory& dir,
            DetRng& rng, Bytes app_image);

  /// Starts the join exchange toward an edge. Only legal from Idle;
  /// anything else is reported and ignored.
  Outbox initiate_join(double now, std::uint64_t edge_id);

  Outbox handle_frame(double now, const Frame& f);
  Outbox on_tick(double now);

  /// Application payload over the secured data plane. Connected only.
  Outbox send_data(double now, ByteSpan payload);

  /// Scenario hook: flips one byte of the app image in place.
  void corrupt_app_image(std::size_t index);

  /// Digest of the current app image, recomputed (and charged) per call.
  AppDigest code_signature();

  Phase phase() const { return phase_; }
  std::optional<std::uint64_t> current_edge() const { return current_edge_; }
  const SymmetricKey* session_key() const {
    return session_key_ ? &*session_key_ : nullptr;
  }
  Counters& counters() { return counters_; }
  const Counters& counters() const { return counters_; }
  EntityRef ref() const { return self_; }

 private:
  struct PendingJoin {
    std::uint64_t edge = 0;
    std::uint16_t psk_index = 0;
    SymmetricKey psk{};
    ChallengeNonce challenge{};
    SymmetricKey candidate{};
    bool key_derived = false;
  };

  Outbox on_challenge(double now, const Frame& f);
  Outbox on_auth_ack(double now, const Frame& f);
  Outbox on_connect_ack(double now, const Frame& f);
  Outbox on_key_renew(double now, const Frame& f);
  Outbox on_disconnect(double now, const Frame& f);
  Outbox on_reject(double now, const Frame& f);
  Frame sealed_to_edge(MsgType t, std::uint64_t edge, const SymmetricKey& key,
                       ByteSpan body);
  void drop_session();

  EntityRef self_;
  const Params& params_;
  const ProvisioningDirectory& dir_;
  const NodeProvision& prov_;
  DetRng& rng_;
  Bytes app_image_;

  Phase phase_ = Phase::Idle;
  std::optional<PendingJoin> pending_;
  std::optional<SymmetricKey> session_key_;
  std::optional<std::uint64_t> current_edge_;
  std::optional<std::uint64_t> reconnect_target_;
  double key_created_at_ = 0;

  Counters counters_;
  CryptoMeter meter_{counters_};
  NonceIssuer issuer_;
  SeqTracker seq_;
  ReplayFloor floors_;
};

}  // namespace miot
