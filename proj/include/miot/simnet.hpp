#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "miot/bytes.hpp"
#include "miot/edge.hpp"
#include "miot/frame.hpp"
#include "miot/metrics.hpp"
#include "miot/name_server.hpp"
#include "miot/node.hpp"
#include "miot/params.hpp"
#include "miot/provisioning.hpp"
#include "miot/rng.hpp"

namespace miot {

struct LinkParams {
  double latency = 0.01;  // seconds, one way
  double jitter = 0.0;    // uniform extra delay in [0, jitter)
  double drop = 0.0;      // loss probability per frame
};

/// One-shot adversary trigger: matches the next outgoing frame whose set
/// fields all agree.
struct CaptureSpec {
  int slot = 0;
  std::optional<EntityRef> sender;
  std::optional<EntityRef> receiver;
  std::optional<MsgType> type;
};

struct TamperSpec {
  std::optional<EntityRef> sender;
  std::optional<EntityRef> receiver;
  std::optional<MsgType> type;
  // Bit offset into the sealed payload region; drawn from the run RNG
  // when absent. Out-of-range values wrap.
  std::optional<std::uint32_t> bit;
};

Counters& operator+=(Counters& a, const Counters& b);

/// Deterministic discrete-event harness. Owns every entity, the clock,
/// the links, and a scriptable adversary; all randomness flows through
/// one seeded generator, so a seed pins the whole run.
class World {
 public:
  World(const Params& params, Mode mode, std::uint64_t seed);

  // Topology. Provisioning material is drawn here, before the clock
  // starts, and is never charged to any entity's meters.
  void add_edge(std::uint64_t id, std::string name, std::string address,
                double x, double y, std::uint32_t capacity);
  void add_node(std::uint64_t id, double x, double y, Bytes app_image,
                std::string model = "sensor",
                std::vector<std::uint16_t> psk_indices = {0, 1, 2});
  /// Marks an edge trusted from t=0: direct registry entry plus an
  /// out-of-band name-server key.
  void bootstrap_edge(std::uint64_t id);
  void set_default_link(LinkParams lp) { default_link_ = lp; }
  void set_link(EntityRef src, EntityRef dst, LinkParams lp);

  // Scripted actions.
  void schedule_edge_register(double t, std::uint64_t edge, std::uint64_t via);
  void schedule_join(double t, std::uint64_t node, std::uint64_t edge);
  void schedule_send(double t, std::uint64_t node, Bytes payload);
  void schedule_sends(double t0, std::uint64_t node, std::uint32_t count,
                      double interval, const std::string& prefix);
  void schedule_waypoint(double t, std::uint64_t node, double x, double y);
  void schedule_corrupt_image(double t, std::uint64_t node, std::size_t index);

  // Adversary actions.
  void schedule_capture(double t, CaptureSpec spec);
  void schedule_replay(double t, int slot, std::uint32_t count, double interval);
  void schedule_tamper(double t, TamperSpec spec);
  void schedule_forge_join(double t, EntityRef fake, std::uint64_t target_edge);
  void schedule_set_drop(double t, EntityRef src, EntityRef dst, double drop);

  /// Drains the event queue up to the horizon, then runs the end-of-run
  /// invariant checks and transcript reconciliation.
  void run(double horizon);

  const std::vector<std::string>& transcript() const { return transcript_; }
  std::string transcript_text() const;
  const std::vector<std::string>& violations() const { return violations_; }
  std::string metrics_text() const;
  /// Per-entity counters plus "adversary" and "global"; global sums the
  /// protocol entities only.
  std::map<std::string, Counters> counters_by_label() const;

  NodeAgent& node(std::uint64_t id);
  EdgeServer& edge(std::uint64_t id);
  NameServer& ns() { return ns_; }
  const ProvisioningDirectory& directory() const { return dir_; }
  const Params& params() const { return params_; }
  Mode mode() const { return mode_; }
  double now() const { return now_; }
  DetRng& rng() { return rng_; }

  /// Invariant-check support: copies a node's cache entry onto a second
  /// edge so the key-at-one-edge scan has something to catch.
  void force_duplicate_entry(std::uint64_t node_id);
  /// Same, but mid-run; the end-of-run scan then reports the violation.
  void schedule_duplicate_entry(double t, std::uint64_t node_id);

 private:
  struct DeliverEv { EntityRef src; EntityRef dst; Bytes bytes; };
  struct TickEv {};
  struct EdgeRegisterEv { std::uint64_t edge; std::uint64_t via; };
  struct NodeJoinEv { std::uint64_t node; std::uint64_t edge; };
  struct NodeSendEv { std::uint64_t node; Bytes payload; };
  struct WaypointEv { std::uint64_t node; double x; double y; };
  struct CorruptImageEv { std::uint64_t node; std::size_t index; };
  struct ArmCaptureEv { CaptureSpec spec; };
  struct ReplayShotEv { int slot; };
  struct ArmTamperEv { TamperSpec spec; };
  struct ForgeJoinEv { EntityRef fake; std::uint64_t target; };
  struct SetDropEv { EntityRef src; EntityRef dst; double drop; };
  struct InjectDuplicateEv { std::uint64_t node; };

  using EventBody =
      std::variant<DeliverEv, TickEv, EdgeRegisterEv, NodeJoinEv, NodeSendEv,
                   WaypointEv, CorruptImageEv, ArmCaptureEv, ReplayShotEv,
                   ArmTamperEv, ForgeJoinEv, SetDropEv, InjectDuplicateEv>;

  struct Event {
    double time = 0.0;
    std::uint64_t order = 0;  // ties resolve in scheduling order
    EventBody body;
  };
  struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      return a.order > b.order;
    }
  };

  struct CapturedFrame {
    Bytes bytes;
    EntityRef src;
    EntityRef dst;
    MsgType type = MsgType::DataFrame;
  };

  struct WireStat {
    std::uint64_t sends = 0;
    std::uint64_t delivers = 0;
    std::uint64_t drops = 0;
    std::uint64_t expired = 0;  // still in flight when the run ended
  };

  struct Adversary {
    Counters counters;
    CryptoMeter meter{counters};
    SeqTracker seq;
    NonceIssuer issuer;
    std::vector<CaptureSpec> captures;
    std::deque<TamperSpec> tampers;
    std::map<int, CapturedFrame> captured;
  };

  void push(double t, EventBody body);
  void dispatch(const Event& ev);
  void handle_deliver(const DeliverEv& ev);
  void handle_tick();

  LinkParams link(EntityRef src, EntityRef dst) const;
  void send_frame(Counters& owner, const Frame& f);
  void link_deliver(EntityRef src, EntityRef dst, Bytes bytes);
  /// Notes become transcript lines; frames enter the link layer.
  void dispatch_outbox(EntityRef who, Counters& owner, Outbox&& out,
                       std::size_t note_from = 0);
  Counters* find_counters(EntityRef who);

  void line(const std::string& kind, const std::string& sender,
            const std::string& receiver, const std::string& msg,
            const std::string& outcome, const std::string& detail);
  static bool match(const CaptureSpec& s, const Frame& f);
  static bool match(const TamperSpec& s, const Frame& f);

  void scan_key_location(std::uint64_t node_id);
  void end_of_run_checks();
  void reconcile_transcript();

  Params params_;
  Mode mode_;
  DetRng rng_;
  ProvisioningDirectory dir_;
  NameServer ns_;
  std::map<std::uint64_t, EdgeServer> edges_;
  std::map<std::uint64_t, NodeAgent> nodes_;
  std::map<std::uint64_t, std::pair<double, double>> node_pos_;
  Adversary adv_;

  LinkParams default_link_;
  std::map<std::pair<EntityRef, EntityRef>, LinkParams> links_;
  std::map<std::pair<EntityRef, EntityRef>, double> last_delivery_;
  std::map<std::pair<EntityRef, EntityRef>, WireStat> wire_;

  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  std::uint64_t next_order_ = 0;
  double now_ = 0.0;
  bool ran_ = false;

  std::vector<std::string> transcript_;
  std::vector<std::string> violations_;
};

}  // namespace miot
