#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "miot/bytes.hpp"
#include "miot/params.hpp"
#include "miot/simnet.hpp"

namespace miot {

/// Raised for unreadable files, malformed JSON, unknown fields, and
/// field values that fail validation. The message names the file and
/// the offending field.
class ScenarioInvalid : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Waypoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

struct ScenarioEdge {
  std::uint64_t id = 0;
  std::string name;
  std::string address;
  double x = 0.0;
  double y = 0.0;
  std::uint32_t capacity = 1;
  // Edges are trusted from t=0 unless they join through a sponsor.
  bool bootstrap = true;
  std::optional<double> join_at;
  std::optional<std::uint64_t> via;
};

struct ScenarioNode {
  std::uint64_t id = 0;
  std::string model = "sensor";
  std::vector<std::uint16_t> psk_indices = {0, 1, 2};
  double x = 0.0;
  double y = 0.0;
  Bytes app_image;
  std::vector<Waypoint> waypoints;
};

struct ScriptAction {
  enum class Kind { Join, Send, CorruptImage };
  Kind kind = Kind::Join;
  double at = 0.0;
  std::uint64_t node = 0;
  std::uint64_t edge = 0;        // Join
  std::uint32_t count = 1;       // Send
  double interval = 0.0;         // Send, between frames
  std::string payload = "data";  // Send, prefix when count > 1
  std::size_t index = 0;         // CorruptImage, byte to flip
};

struct AdversaryStep {
  enum class Kind { Capture, Replay, TamperBit, ForgeJoin, SetDrop };
  Kind kind = Kind::Capture;
  double at = 0.0;
  CaptureSpec capture;  // Capture
  int slot = 0;         // Replay
  std::uint32_t count = 1;
  double interval = 0.05;
  TamperSpec tamper;  // TamperBit
  EntityRef fake;     // ForgeJoin
  std::uint64_t target = 0;
  EntityRef src;  // SetDrop
  EntityRef dst;
  double drop = 0.0;
};

struct LinkOverride {
  EntityRef src;
  EntityRef dst;
  LinkParams lp;
};

struct ScenarioSpec {
  std::string name;
  std::string description;
  std::string origin;  // file path, kept for diagnostics
  std::uint64_t seed = 1;
  double duration = 0.0;
  Mode mode = Mode::Migration;
  Params params;
  LinkParams default_link;
  std::vector<LinkOverride> link_overrides;
  std::vector<ScenarioEdge> edges;
  std::vector<ScenarioNode> nodes;
  std::vector<ScriptAction> script;
  std::vector<AdversaryStep> adversary;

  bool has_adversary() const { return !adversary.empty(); }
  std::size_t join_count(std::uint64_t node_id) const;
};

/// Parses and validates scenario JSON. `origin` is the path reported in
/// diagnostics and the base for resolving app_image_ref entries.
ScenarioSpec parse_scenario(const std::string& text, const std::string& origin);

ScenarioSpec load_scenario(const std::string& path);

/// Populates a freshly constructed World: topology first, then every
/// scripted and adversary action. Does not run it.
void apply_scenario(World& w, const ScenarioSpec& spec);

}  // namespace miot
