#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "miot/crypto.hpp"
#include "miot/frame.hpp"

namespace miot {

/// Pre-shared material for one mobile node: its key set, provisioned
/// identity fingerprint, and the digest of the app image it is supposed
/// to be running.
struct NodeProvision {
  std::uint64_t id = 0;
  std::string model;
  std::map<std::uint16_t, SymmetricKey> psks;
  DeviceFingerprint fingerprint{};
  AppDigest approved_digest{};
};

struct EdgeProvision {
  std::uint64_t id = 0;
  std::string model;
  std::map<std::uint16_t, SymmetricKey> psks;
  DeviceFingerprint fingerprint{};
};

/// Deployment-time secrets shared by every legitimate party. Built once
/// at world setup; entities hold const references. Fingerprints are
/// computed here, out of band, so they cost no run-time energy.
class ProvisioningDirectory {
 public:
  SymmetricKey domain_key{};
  Bytes fingerprint_salt;
  std::map<std::uint64_t, NodeProvision> nodes;
  std::map<std::uint64_t, EdgeProvision> edges;

  const NodeProvision* node(std::uint64_t id) const {
    auto it = nodes.find(id);
    return it == nodes.end() ? nullptr : &it->second;
  }
  const EdgeProvision* edge(std::uint64_t id) const {
    auto it = edges.find(id);
    return it == edges.end() ? nullptr : &it->second;
  }

  /// Key a sender claims to hold, or null if (sender, index) is not
  /// provisioned. Kind mismatches are unknown keys too.
  const SymmetricKey* psk(EntityRef who, std::uint16_t index) const {
    if (who.kind == EntityKind::Node) {
      if (const NodeProvision* p = node(who.id)) {
        auto it = p->psks.find(index);
        if (it != p->psks.end()) return &it->second;
      }
    } else if (who.kind == EntityKind::Edge) {
      if (const EdgeProvision* p = edge(who.id)) {
        auto it = p->psks.find(index);
        if (it != p->psks.end()) return &it->second;
      }
    }
    return nullptr;
  }

  const DeviceFingerprint* fingerprint(EntityRef who) const {
    if (who.kind == EntityKind::Node) {
      if (const NodeProvision* p = node(who.id)) return &p->fingerprint;
    } else if (who.kind == EntityKind::Edge) {
      if (const EdgeProvision* p = edge(who.id)) return &p->fingerprint;
    }
    return nullptr;
  }
};

}  // namespace miot
