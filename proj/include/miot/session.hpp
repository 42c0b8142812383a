#pragma once

#include <cstdint>
#include <map>

#include "miot/frame.hpp"

namespace miot {

/// Outgoing sequence numbers, one counter per peer. Counters survive
/// rejoins and key changes; a sender never reuses a seq toward the same
/// peer within a run.
class SeqTracker {
 public:
  std::uint32_t next(EntityRef to) { return next_[to]++; }

 private:
  std::map<EntityRef, std::uint32_t> next_;
};

/// Highest sequence number accepted per sender. Floors outlive session
/// state on purpose: a replayed frame from before a rejoin must still
/// land below the floor.
class ReplayFloor {
 public:
  bool fresh(EntityRef from, std::uint32_t seq) const {
    auto it = floor_.find(from);
    return it == floor_.end() || static_cast<std::int64_t>(seq) > it->second;
  }
  void accept(EntityRef from, std::uint32_t seq) {
    auto [it, inserted] = floor_.try_emplace(from, seq);
    if (!inserted && static_cast<std::int64_t>(seq) > it->second) {
      it->second = seq;
    }
  }

 private:
  std::map<EntityRef, std::int64_t> floor_;
};

inline Frame make_frame(MsgType t, EntityRef sender, EntityRef receiver,
                        std::uint32_t seq) {
  Frame f;
  f.type = t;
  f.sender = sender;
  f.receiver = receiver;
  f.seq = seq;
  return f;
}

}  // namespace miot
