#pragma once

#include <cstdint>

namespace miot {

/// Migration transfers session keys between edges at handoff;
/// BaselineReauth tears the session down and makes the node run the full
/// join again at the new edge. Nothing else differs between the modes.
enum class Mode { Migration, BaselineReauth };

/// Tunables shared by every entity in a run. Defaults match the shipped
/// scenarios; the scenario file can override any of them.
struct Params {
  double session_ttl = 600.0;        // seconds a session key lives without renewal
  double tick_interval = 1.0;        // seconds between maintenance ticks
  double coverage_radius = 300.0;    // meters before an edge hands a node off
  double pdr_threshold = 0.5;        // delivery ratio below this raises an alert
  std::uint32_t pdr_window = 50;     // expected frames per delivery-ratio window
  std::uint32_t renew_timeout_ticks = 3;   // unanswered renew ticks before eviction
  std::uint32_t denylist_threshold = 3;    // failed joins before a sender is denylisted
  double weight_distance = 0.7;      // recommendation score: distance term weight
  double weight_load = 0.3;          // recommendation score: load term weight
  double distance_norm = 1000.0;     // meters mapped to distance score 1.0

  // Energy proxy weights: one unit per AEAD op, one per hash op, and a
  // per-byte radio cost.
  double energy_aead = 1.0;
  double energy_hash = 1.0;
  double energy_byte = 0.01;
};

}  // namespace miot
