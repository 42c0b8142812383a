#include "miot/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "miot/frame.hpp"

namespace miot {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ScenarioInvalid(where + ": " + what);
}

void require_known(const json& obj, const std::string& where,
                   std::initializer_list<const char*> keys) {
  for (const auto& item : obj.items()) {
    const bool known = std::any_of(keys.begin(), keys.end(), [&](const char* k) {
      return item.key() == k;
    });
    if (!known) fail(where, "unknown field \"" + item.key() + "\"");
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double get_num(const json& obj, const std::string& where, const char* key) {
  const json* v = find(obj, key);
  if (!v) fail(where, std::string("missing field \"") + key + "\"");
  if (!v->is_number()) fail(where + "." + key, "expected a number");
  return v->get<double>();
}

double get_num_or(const json& obj, const std::string& where, const char* key,
                  double dflt) {
  const json* v = find(obj, key);
  if (!v) return dflt;
  if (!v->is_number()) fail(where + "." + key, "expected a number");
  return v->get<double>();
}

std::uint64_t get_uint(const json& obj, const std::string& where,
                       const char* key) {
  const json* v = find(obj, key);
  if (!v) fail(where, std::string("missing field \"") + key + "\"");
  if (!v->is_number_unsigned()) {
    fail(where + "." + key, "expected a non-negative integer");
  }
  return v->get<std::uint64_t>();
}

std::uint64_t get_uint_or(const json& obj, const std::string& where,
                          const char* key, std::uint64_t dflt) {
  if (!find(obj, key)) return dflt;
  return get_uint(obj, where, key);
}

std::string get_str(const json& obj, const std::string& where, const char* key) {
  const json* v = find(obj, key);
  if (!v) fail(where, std::string("missing field \"") + key + "\"");
  if (!v->is_string()) fail(where + "." + key, "expected a string");
  return v->get<std::string>();
}

std::string get_str_or(const json& obj, const std::string& where,
                       const char* key, std::string dflt) {
  const json* v = find(obj, key);
  if (!v) return dflt;
  if (!v->is_string()) fail(where + "." + key, "expected a string");
  return v->get<std::string>();
}

bool get_bool_or(const json& obj, const std::string& where, const char* key,
                 bool dflt) {
  const json* v = find(obj, key);
  if (!v) return dflt;
  if (!v->is_boolean()) fail(where + "." + key, "expected a boolean");
  return v->get<bool>();
}

EntityRef parse_label(const std::string& where, const std::string& s) {
  if (s == "ns" || s == "ns:0") return kNameServerRef;
  const auto colon = s.find(':');
  if (colon != std::string::npos) {
    const std::string kind = s.substr(0, colon);
    const std::string num = s.substr(colon + 1);
    const bool digits =
        !num.empty() && std::all_of(num.begin(), num.end(), [](char c) {
          return c >= '0' && c <= '9';
        });
    if (digits && (kind == "node" || kind == "edge")) {
      EntityRef r;
      r.kind = kind == "node" ? EntityKind::Node : EntityKind::Edge;
      r.id = std::stoull(num);
      return r;
    }
  }
  fail(where, "expected an entity label like \"node:1\", \"edge:2\", or \"ns\"");
}

EntityRef get_label(const json& obj, const std::string& where, const char* key) {
  return parse_label(where + "." + key, get_str(obj, where, key));
}

MsgType parse_msg_type(const std::string& where, const std::string& s) {
  for (int t = 0x01; t <= 0x12; ++t) {
    const auto mt = static_cast<MsgType>(t);
    if (s == msg_type_name(mt)) return mt;
  }
  fail(where, "unknown message type \"" + s + "\"");
}

LinkParams parse_link_params(const json& obj, const std::string& where,
                             const LinkParams& base) {
  LinkParams lp = base;
  lp.latency = get_num_or(obj, where, "latency", base.latency);
  lp.jitter = get_num_or(obj, where, "jitter", base.jitter);
  lp.drop = get_num_or(obj, where, "drop", base.drop);
  if (lp.latency < 0.0) fail(where + ".latency", "must be >= 0");
  if (lp.jitter < 0.0) fail(where + ".jitter", "must be >= 0");
  if (lp.drop < 0.0 || lp.drop > 1.0) fail(where + ".drop", "must be in [0, 1]");
  return lp;
}

void parse_params(const json& obj, const std::string& where, Params& p) {
  require_known(obj, where,
                {"session_ttl", "tick_interval", "coverage_radius",
                 "pdr_threshold", "pdr_window", "renew_timeout_ticks",
                 "denylist_threshold", "energy_aead", "energy_hash",
                 "energy_byte"});
  p.session_ttl = get_num_or(obj, where, "session_ttl", p.session_ttl);
  p.tick_interval = get_num_or(obj, where, "tick_interval", p.tick_interval);
  p.coverage_radius =
      get_num_or(obj, where, "coverage_radius", p.coverage_radius);
  p.pdr_threshold = get_num_or(obj, where, "pdr_threshold", p.pdr_threshold);
  p.pdr_window =
      static_cast<std::uint32_t>(get_uint_or(obj, where, "pdr_window", p.pdr_window));
  p.renew_timeout_ticks = static_cast<std::uint32_t>(
      get_uint_or(obj, where, "renew_timeout_ticks", p.renew_timeout_ticks));
  p.denylist_threshold = static_cast<std::uint32_t>(
      get_uint_or(obj, where, "denylist_threshold", p.denylist_threshold));
  p.energy_aead = get_num_or(obj, where, "energy_aead", p.energy_aead);
  p.energy_hash = get_num_or(obj, where, "energy_hash", p.energy_hash);
  p.energy_byte = get_num_or(obj, where, "energy_byte", p.energy_byte);
  if (p.session_ttl <= 0.0) fail(where + ".session_ttl", "must be > 0");
  if (p.tick_interval <= 0.0) fail(where + ".tick_interval", "must be > 0");
  if (p.coverage_radius <= 0.0) fail(where + ".coverage_radius", "must be > 0");
  if (p.pdr_threshold < 0.0 || p.pdr_threshold > 1.0) {
    fail(where + ".pdr_threshold", "must be in [0, 1]");
  }
  if (p.pdr_window == 0) fail(where + ".pdr_window", "must be >= 1");
  if (p.renew_timeout_ticks == 0) {
    fail(where + ".renew_timeout_ticks", "must be >= 1");
  }
  if (p.denylist_threshold == 0) {
    fail(where + ".denylist_threshold", "must be >= 1");
  }
  if (p.energy_aead < 0.0) fail(where + ".energy_aead", "must be >= 0");
  if (p.energy_hash < 0.0) fail(where + ".energy_hash", "must be >= 0");
  if (p.energy_byte < 0.0) fail(where + ".energy_byte", "must be >= 0");
}

void parse_name_server(const json& obj, const std::string& where, Params& p) {
  require_known(obj, where, {"weight_distance", "weight_load", "distance_norm"});
  p.weight_distance =
      get_num_or(obj, where, "weight_distance", p.weight_distance);
  p.weight_load = get_num_or(obj, where, "weight_load", p.weight_load);
  p.distance_norm = get_num_or(obj, where, "distance_norm", p.distance_norm);
  if (p.weight_distance < 0.0) fail(where + ".weight_distance", "must be >= 0");
  if (p.weight_load < 0.0) fail(where + ".weight_load", "must be >= 0");
  if (p.distance_norm <= 0.0) fail(where + ".distance_norm", "must be > 0");
}

ScenarioEdge parse_edge(const json& obj, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  require_known(obj, where,
                {"id", "name", "address", "x", "y", "capacity", "bootstrap",
                 "join_at", "via"});
  ScenarioEdge e;
  e.id = get_uint(obj, where, "id");
  if (e.id == 0) fail(where + ".id", "edge ids start at 1");
  e.name = get_str(obj, where, "name");
  if (e.name.empty()) fail(where + ".name", "must not be empty");
  e.address = get_str_or(obj, where, "address",
                         "10.0." + std::to_string(e.id) + ".1");
  e.x = get_num(obj, where, "x");
  e.y = get_num(obj, where, "y");
  const std::uint64_t cap = get_uint(obj, where, "capacity");
  if (cap == 0 || cap > 0xffffffffull) {
    fail(where + ".capacity", "must be a positive 32-bit integer");
  }
  e.capacity = static_cast<std::uint32_t>(cap);
  if (find(obj, "join_at")) {
    e.join_at = get_num(obj, where, "join_at");
    if (*e.join_at < 0.0) fail(where + ".join_at", "must be >= 0");
  }
  if (find(obj, "via")) e.via = get_uint(obj, where, "via");
  e.bootstrap = get_bool_or(obj, where, "bootstrap", !e.join_at.has_value());
  if (e.bootstrap && e.join_at) {
    fail(where, "bootstrap edges cannot also set join_at");
  }
  if (!e.bootstrap && !e.join_at) {
    fail(where, "non-bootstrap edges need join_at");
  }
  return e;
}

ScenarioNode parse_node(const json& obj, const std::string& where,
                        const std::filesystem::path& base_dir) {
  if (!obj.is_object()) fail(where, "expected an object");
  require_known(obj, where,
                {"id", "model", "psk_indices", "x", "y", "app_image",
                 "app_image_hex", "app_image_ref", "waypoints"});
  ScenarioNode n;
  n.id = get_uint(obj, where, "id");
  if (n.id == 0) fail(where + ".id", "node ids start at 1");
  n.model = get_str_or(obj, where, "model", "sensor");
  if (const json* v = find(obj, "psk_indices")) {
    if (!v->is_array() || v->empty()) {
      fail(where + ".psk_indices", "expected a non-empty array");
    }
    n.psk_indices.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& item = (*v)[i];
      const std::string at = where + ".psk_indices[" + std::to_string(i) + "]";
      if (!item.is_number_unsigned() || item.get<std::uint64_t>() > 0xffff) {
        fail(at, "expected an integer in [0, 65535]");
      }
      n.psk_indices.push_back(static_cast<std::uint16_t>(item.get<std::uint64_t>()));
    }
    std::set<std::uint16_t> uniq(n.psk_indices.begin(), n.psk_indices.end());
    if (uniq.size() != n.psk_indices.size()) {
      fail(where + ".psk_indices", "indices must be unique");
    }
  }
  n.x = get_num_or(obj, where, "x", 0.0);
  n.y = get_num_or(obj, where, "y", 0.0);

  const int image_forms = (find(obj, "app_image") ? 1 : 0) +
                          (find(obj, "app_image_hex") ? 1 : 0) +
                          (find(obj, "app_image_ref") ? 1 : 0);
  if (image_forms != 1) {
    fail(where,
         "exactly one of app_image, app_image_hex, app_image_ref is required");
  }
  if (find(obj, "app_image")) {
    const std::string text = get_str(obj, where, "app_image");
    n.app_image.assign(text.begin(), text.end());
  } else if (find(obj, "app_image_hex")) {
    const std::string hex = get_str(obj, where, "app_image_hex");
    try {
      n.app_image = from_hex(hex);
    } catch (const std::invalid_argument&) {
      fail(where + ".app_image_hex", "invalid hex string");
    }
  } else {
    const std::string ref = get_str(obj, where, "app_image_ref");
    const std::filesystem::path path = base_dir / ref;
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(where + ".app_image_ref", "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string data = buf.str();
    n.app_image.assign(data.begin(), data.end());
  }
  if (n.app_image.empty()) fail(where, "app image must not be empty");

  if (const json* v = find(obj, "waypoints")) {
    if (!v->is_array()) fail(where + ".waypoints", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& item = (*v)[i];
      const std::string at = where + ".waypoints[" + std::to_string(i) + "]";
      if (!item.is_array() || item.size() != 3 || !item[0].is_number() ||
          !item[1].is_number() || !item[2].is_number()) {
        fail(at, "expected [time, x, y]");
      }
      Waypoint wp;
      wp.t = item[0].get<double>();
      wp.x = item[1].get<double>();
      wp.y = item[2].get<double>();
      if (wp.t < 0.0) fail(at, "time must be >= 0");
      if (!n.waypoints.empty() && wp.t <= n.waypoints.back().t) {
        fail(at, "waypoint times must be strictly increasing");
      }
      n.waypoints.push_back(wp);
    }
  }
  return n;
}

ScriptAction parse_script_action(const json& obj, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  const std::string action = get_str(obj, where, "action");
  ScriptAction a;
  a.at = get_num(obj, where, "at");
  if (a.at < 0.0) fail(where + ".at", "must be >= 0");
  if (action == "join") {
    require_known(obj, where, {"at", "action", "node", "edge"});
    a.kind = ScriptAction::Kind::Join;
    a.node = get_uint(obj, where, "node");
    a.edge = get_uint(obj, where, "edge");
  } else if (action == "send") {
    require_known(obj, where,
                  {"at", "action", "node", "count", "interval", "payload"});
    a.kind = ScriptAction::Kind::Send;
    a.node = get_uint(obj, where, "node");
    const std::uint64_t count = get_uint_or(obj, where, "count", 1);
    if (count == 0 || count > 1000000) {
      fail(where + ".count", "must be in [1, 1000000]");
    }
    a.count = static_cast<std::uint32_t>(count);
    a.interval = get_num_or(obj, where, "interval", 0.0);
    if (a.interval < 0.0) fail(where + ".interval", "must be >= 0");
    if (a.count > 1 && a.interval <= 0.0) {
      fail(where + ".interval", "must be > 0 when count > 1");
    }
    a.payload = get_str_or(obj, where, "payload", "data");
  } else if (action == "corrupt_image") {
    require_known(obj, where, {"at", "action", "node", "index"});
    a.kind = ScriptAction::Kind::CorruptImage;
    a.node = get_uint(obj, where, "node");
    a.index = static_cast<std::size_t>(get_uint_or(obj, where, "index", 0));
  } else {
    fail(where + ".action", "unknown action \"" + action + "\"");
  }
  return a;
}

AdversaryStep parse_adversary_step(const json& obj, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  const std::string action = get_str(obj, where, "action");
  AdversaryStep s;
  s.at = get_num(obj, where, "at");
  if (s.at < 0.0) fail(where + ".at", "must be >= 0");
  if (action == "capture") {
    require_known(obj, where,
                  {"at", "action", "slot", "sender", "receiver", "msg_type"});
    s.kind = AdversaryStep::Kind::Capture;
    const std::uint64_t slot = get_uint(obj, where, "slot");
    if (slot > 0x7fffffffull) fail(where + ".slot", "slot too large");
    s.capture.slot = static_cast<int>(slot);
    if (find(obj, "sender")) s.capture.sender = get_label(obj, where, "sender");
    if (find(obj, "receiver")) {
      s.capture.receiver = get_label(obj, where, "receiver");
    }
    if (find(obj, "msg_type")) {
      s.capture.type =
          parse_msg_type(where + ".msg_type", get_str(obj, where, "msg_type"));
    }
  } else if (action == "replay") {
    require_known(obj, where, {"at", "action", "slot", "count", "interval"});
    s.kind = AdversaryStep::Kind::Replay;
    const std::uint64_t slot = get_uint(obj, where, "slot");
    if (slot > 0x7fffffffull) fail(where + ".slot", "slot too large");
    s.slot = static_cast<int>(slot);
    const std::uint64_t count = get_uint_or(obj, where, "count", 1);
    if (count == 0 || count > 1000000) {
      fail(where + ".count", "must be in [1, 1000000]");
    }
    s.count = static_cast<std::uint32_t>(count);
    s.interval = get_num_or(obj, where, "interval", 0.05);
    if (s.interval < 0.0) fail(where + ".interval", "must be >= 0");
  } else if (action == "tamper_bit") {
    require_known(obj, where,
                  {"at", "action", "sender", "receiver", "msg_type", "bit"});
    s.kind = AdversaryStep::Kind::TamperBit;
    if (find(obj, "sender")) s.tamper.sender = get_label(obj, where, "sender");
    if (find(obj, "receiver")) {
      s.tamper.receiver = get_label(obj, where, "receiver");
    }
    if (find(obj, "msg_type")) {
      s.tamper.type =
          parse_msg_type(where + ".msg_type", get_str(obj, where, "msg_type"));
    }
    if (find(obj, "bit")) {
      const std::uint64_t bit = get_uint(obj, where, "bit");
      if (bit > 0xffffffffull) fail(where + ".bit", "bit index too large");
      s.tamper.bit = static_cast<std::uint32_t>(bit);
    }
  } else if (action == "forge_join") {
    require_known(obj, where, {"at", "action", "kind", "id", "target"});
    s.kind = AdversaryStep::Kind::ForgeJoin;
    const std::string kind = get_str(obj, where, "kind");
    if (kind == "node") {
      s.fake.kind = EntityKind::Node;
    } else if (kind == "edge") {
      s.fake.kind = EntityKind::Edge;
    } else {
      fail(where + ".kind", "expected \"node\" or \"edge\"");
    }
    s.fake.id = get_uint(obj, where, "id");
    if (s.fake.id == 0) fail(where + ".id", "forged ids start at 1");
    s.target = get_uint(obj, where, "target");
  } else if (action == "set_drop") {
    require_known(obj, where, {"at", "action", "src", "dst", "drop"});
    s.kind = AdversaryStep::Kind::SetDrop;
    s.src = get_label(obj, where, "src");
    s.dst = get_label(obj, where, "dst");
    s.drop = get_num(obj, where, "drop");
    if (s.drop < 0.0 || s.drop > 1.0) fail(where + ".drop", "must be in [0, 1]");
  } else {
    fail(where + ".action", "unknown action \"" + action + "\"");
  }
  return s;
}

/// Cross-references that only make sense once the whole file is in.
void validate(ScenarioSpec& spec) {
  const std::string& origin = spec.origin;
  std::set<std::uint64_t> edge_ids;
  std::set<std::string> edge_names;
  std::optional<std::uint64_t> first_bootstrap;
  for (std::size_t i = 0; i < spec.edges.size(); ++i) {
    const ScenarioEdge& e = spec.edges[i];
    const std::string where = origin + ": edges[" + std::to_string(i) + "]";
    if (!edge_ids.insert(e.id).second) fail(where + ".id", "duplicate edge id");
    if (!edge_names.insert(e.name).second) {
      fail(where + ".name", "duplicate edge name");
    }
    if (e.bootstrap && !first_bootstrap) first_bootstrap = e.id;
  }
  for (std::size_t i = 0; i < spec.edges.size(); ++i) {
    ScenarioEdge& e = spec.edges[i];
    const std::string where = origin + ": edges[" + std::to_string(i) + "]";
    if (e.bootstrap) continue;
    if (!e.via) {
      if (!first_bootstrap) fail(where, "no bootstrap edge to join through");
      e.via = *first_bootstrap;
    }
    if (*e.via == e.id) fail(where + ".via", "an edge cannot sponsor itself");
    if (!edge_ids.count(*e.via)) fail(where + ".via", "unknown edge id");
    const auto via_it =
        std::find_if(spec.edges.begin(), spec.edges.end(),
                     [&](const ScenarioEdge& o) { return o.id == *e.via; });
    if (!via_it->bootstrap && via_it->join_at &&
        *via_it->join_at >= *e.join_at) {
      fail(where + ".via", "sponsor edge joins later");
    }
  }

  std::set<std::uint64_t> node_ids;
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const ScenarioNode& n = spec.nodes[i];
    const std::string where = origin + ": nodes[" + std::to_string(i) + "]";
    if (!node_ids.insert(n.id).second) fail(where + ".id", "duplicate node id");
  }

  auto check_ref = [&](const std::string& where, EntityRef r) {
    switch (r.kind) {
      case EntityKind::Node:
        if (!node_ids.count(r.id)) fail(where, "unknown node id");
        break;
      case EntityKind::Edge:
        if (!edge_ids.count(r.id)) fail(where, "unknown edge id");
        break;
      case EntityKind::NameServer:
        if (r.id != 0) fail(where, "the name server is ns:0");
        break;
    }
  };

  for (std::size_t i = 0; i < spec.link_overrides.size(); ++i) {
    const LinkOverride& lo = spec.link_overrides[i];
    const std::string where =
        origin + ": links.overrides[" + std::to_string(i) + "]";
    check_ref(where + ".src", lo.src);
    check_ref(where + ".dst", lo.dst);
    if (lo.src == lo.dst) fail(where, "src and dst must differ");
  }

  for (std::size_t i = 0; i < spec.script.size(); ++i) {
    const ScriptAction& a = spec.script[i];
    const std::string where = origin + ": script[" + std::to_string(i) + "]";
    if (!node_ids.count(a.node)) fail(where + ".node", "unknown node id");
    if (a.kind == ScriptAction::Kind::Join && !edge_ids.count(a.edge)) {
      fail(where + ".edge", "unknown edge id");
    }
  }

  std::set<int> capture_slots;
  for (const AdversaryStep& s : spec.adversary) {
    if (s.kind == AdversaryStep::Kind::Capture) {
      capture_slots.insert(s.capture.slot);
    }
  }
  for (std::size_t i = 0; i < spec.adversary.size(); ++i) {
    const AdversaryStep& s = spec.adversary[i];
    const std::string where = origin + ": adversary[" + std::to_string(i) + "]";
    switch (s.kind) {
      case AdversaryStep::Kind::Replay:
        if (!capture_slots.count(s.slot)) {
          fail(where + ".slot", "no capture arms this slot");
        }
        break;
      case AdversaryStep::Kind::ForgeJoin:
        if (!edge_ids.count(s.target)) fail(where + ".target", "unknown edge id");
        break;
      case AdversaryStep::Kind::SetDrop:
        check_ref(where + ".src", s.src);
        check_ref(where + ".dst", s.dst);
        if (s.src == s.dst) fail(where, "src and dst must differ");
        break;
      default:
        break;
    }
  }
}

}  // namespace

std::size_t ScenarioSpec::join_count(std::uint64_t node_id) const {
  std::size_t n = 0;
  for (const ScriptAction& a : script) {
    if (a.kind == ScriptAction::Kind::Join && a.node == node_id) ++n;
  }
  return n;
}

ScenarioSpec parse_scenario(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioInvalid(origin + ": " + e.what());
  }
  if (!root.is_object()) fail(origin, "scenario must be a JSON object");
  require_known(root, origin,
                {"name", "description", "seed", "duration", "mode", "params",
                 "name_server", "links", "edges", "nodes", "script",
                 "adversary"});

  ScenarioSpec spec;
  spec.origin = origin;
  spec.name = get_str_or(root, origin, "name", "");
  spec.description = get_str_or(root, origin, "description", "");
  spec.seed = get_uint_or(root, origin, "seed", 1);
  spec.duration = get_num(root, origin, "duration");
  if (spec.duration < 0.0) fail(origin + ".duration", "must be >= 0");

  const std::string mode = get_str_or(root, origin, "mode", "migration");
  if (mode == "migration") {
    spec.mode = Mode::Migration;
  } else if (mode == "baseline") {
    spec.mode = Mode::BaselineReauth;
  } else {
    fail(origin + ".mode", "expected \"migration\" or \"baseline\"");
  }

  if (const json* v = find(root, "params")) {
    if (!v->is_object()) fail(origin + ".params", "expected an object");
    parse_params(*v, origin + ".params", spec.params);
  }
  if (const json* v = find(root, "name_server")) {
    if (!v->is_object()) fail(origin + ".name_server", "expected an object");
    parse_name_server(*v, origin + ".name_server", spec.params);
  }

  if (const json* v = find(root, "links")) {
    const std::string where = origin + ".links";
    if (!v->is_object()) fail(where, "expected an object");
    require_known(*v, where, {"default", "overrides"});
    if (const json* d = find(*v, "default")) {
      if (!d->is_object()) fail(where + ".default", "expected an object");
      require_known(*d, where + ".default", {"latency", "jitter", "drop"});
      spec.default_link =
          parse_link_params(*d, where + ".default", LinkParams{});
    }
    if (const json* o = find(*v, "overrides")) {
      if (!o->is_array()) fail(where + ".overrides", "expected an array");
      for (std::size_t i = 0; i < o->size(); ++i) {
        const json& item = (*o)[i];
        const std::string at = where + ".overrides[" + std::to_string(i) + "]";
        if (!item.is_object()) fail(at, "expected an object");
        require_known(item, at, {"src", "dst", "latency", "jitter", "drop"});
        LinkOverride lo;
        lo.src = get_label(item, at, "src");
        lo.dst = get_label(item, at, "dst");
        lo.lp = parse_link_params(item, at, spec.default_link);
        spec.link_overrides.push_back(lo);
      }
    }
  }

  const std::filesystem::path base_dir =
      std::filesystem::path(origin).parent_path();
  if (const json* v = find(root, "edges")) {
    if (!v->is_array()) fail(origin + ".edges", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      spec.edges.push_back(
          parse_edge((*v)[i], origin + ": edges[" + std::to_string(i) + "]"));
    }
  }
  if (const json* v = find(root, "nodes")) {
    if (!v->is_array()) fail(origin + ".nodes", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      spec.nodes.push_back(parse_node(
          (*v)[i], origin + ": nodes[" + std::to_string(i) + "]", base_dir));
    }
  }
  if (const json* v = find(root, "script")) {
    if (!v->is_array()) fail(origin + ".script", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      spec.script.push_back(parse_script_action(
          (*v)[i], origin + ": script[" + std::to_string(i) + "]"));
    }
  }
  if (const json* v = find(root, "adversary")) {
    if (!v->is_array()) fail(origin + ".adversary", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      spec.adversary.push_back(parse_adversary_step(
          (*v)[i], origin + ": adversary[" + std::to_string(i) + "]"));
    }
  }

  validate(spec);
  return spec;
}

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioInvalid("cannot read scenario file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

void apply_scenario(World& w, const ScenarioSpec& spec) {
  for (const ScenarioEdge& e : spec.edges) {
    w.add_edge(e.id, e.name, e.address, e.x, e.y, e.capacity);
  }
  for (const ScenarioNode& n : spec.nodes) {
    w.add_node(n.id, n.x, n.y, n.app_image, n.model, n.psk_indices);
  }
  for (const ScenarioEdge& e : spec.edges) {
    if (e.bootstrap) w.bootstrap_edge(e.id);
  }

  w.set_default_link(spec.default_link);
  for (const LinkOverride& lo : spec.link_overrides) {
    w.set_link(lo.src, lo.dst, lo.lp);
  }

  for (const ScenarioEdge& e : spec.edges) {
    if (!e.bootstrap) w.schedule_edge_register(*e.join_at, e.id, *e.via);
  }
  for (const ScenarioNode& n : spec.nodes) {
    for (const Waypoint& wp : n.waypoints) {
      w.schedule_waypoint(wp.t, n.id, wp.x, wp.y);
    }
  }

  for (const ScriptAction& a : spec.script) {
    switch (a.kind) {
      case ScriptAction::Kind::Join:
        w.schedule_join(a.at, a.node, a.edge);
        break;
      case ScriptAction::Kind::Send:
        if (a.count == 1) {
          w.schedule_send(a.at, a.node,
                          Bytes(a.payload.begin(), a.payload.end()));
        } else {
          w.schedule_sends(a.at, a.node, a.count, a.interval, a.payload);
        }
        break;
      case ScriptAction::Kind::CorruptImage:
        w.schedule_corrupt_image(a.at, a.node, a.index);
        break;
    }
  }

  for (const AdversaryStep& s : spec.adversary) {
    switch (s.kind) {
      case AdversaryStep::Kind::Capture:
        w.schedule_capture(s.at, s.capture);
        break;
      case AdversaryStep::Kind::Replay:
        w.schedule_replay(s.at, s.slot, s.count, s.interval);
        break;
      case AdversaryStep::Kind::TamperBit:
        w.schedule_tamper(s.at, s.tamper);
        break;
      case AdversaryStep::Kind::ForgeJoin:
        w.schedule_forge_join(s.at, s.fake, s.target);
        break;
      case AdversaryStep::Kind::SetDrop:
        w.schedule_set_drop(s.at, s.src, s.dst, s.drop);
        break;
    }
  }
}

}  // namespace miot
