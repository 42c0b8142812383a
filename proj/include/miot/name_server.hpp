#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "miot/crypto.hpp"
#include "miot/messages.hpp"
#include "miot/metrics.hpp"
#include "miot/params.hpp"
#include "miot/provisioning.hpp"
#include "miot/rng.hpp"
#include "miot/session.hpp"

namespace miot {

struct NameRecord {
  std::uint64_t edge_id = 0;
  std::string name;
  std::string address;
  double x = 0;
  double y = 0;
  std::uint32_t capacity = 0;
  std::uint32_t current_load = 0;
  std::uint64_t authenticated_by = 0;
  double registered_at = 0;
};

enum class RegisterError { ok, duplicate_edge, duplicate_name, unauthorized_registrar };

/// Central directory of edge servers. Authenticates nobody itself; it
/// trusts registrations relayed by already-registered edges and speaks
/// to each edge under a pairwise key.
class NameServer {
 public:
  NameServer(const Params& params, DetRng& rng, const SymmetricKey& domain_key);

  /// Installs the key for an edge that is trusted from t=0.
  void install_edge_key(std::uint64_t edge_id, const SymmetricKey& key);

  /// Direct registration for the bootstrap edge; no frames involved.
  RegisterError register_direct(const NameRecord& rec);

  Outbox handle_frame(double now, const Frame& f);
  Outbox on_tick(double now);

  /// Pure recommendation core: among registered edges with id !=
  /// exclude and load < capacity, minimize
  ///   weight_distance * dist((x,y), edge) / distance_norm
  /// + weight_load * load / capacity,
  /// ties to the smallest id.
  std::optional<std::uint64_t> recommend(double x, double y,
                                         std::uint64_t exclude) const;

  const std::map<std::uint64_t, NameRecord>& registry() const { return registry_; }
  const NameRecord* lookup_name(const std::string& name) const;
  const NameRecord* lookup_address(const std::string& address) const;
  void update_load(std::uint64_t edge_id, std::uint32_t load);

  /// One line per record, id order, for the run report.
  std::string registry_dump() const;

  Counters& counters() { return counters_; }
  const Counters& counters() const { return counters_; }
  EntityRef ref() const { return kNameServerRef; }
  bool has_edge_key(std::uint64_t edge_id) const { return keys_.count(edge_id) != 0; }

 private:
  Outbox on_register_edge(double now, const Frame& f, const SymmetricKey& key,
                          const Bytes& plain);
  Outbox on_recommend_request(double now, const Frame& f, const SymmetricKey& key,
                              const Bytes& plain);
  Frame sealed_reply(MsgType t, std::uint64_t edge_id, const SymmetricKey& key,
                     ByteSpan body);

  const Params& params_;
  DetRng& rng_;
  SymmetricKey domain_key_;
  Counters counters_;
  CryptoMeter meter_{counters_};
  NonceIssuer issuer_;
  SeqTracker seq_;
  ReplayFloor floors_;
  std::map<std::uint64_t, SymmetricKey> keys_;
  std::map<std::uint64_t, NameRecord> registry_;
};

}  // namespace miot
