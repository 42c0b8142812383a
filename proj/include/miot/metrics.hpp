#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miot/crypto.hpp"
#include "miot/frame.hpp"
#include "miot/params.hpp"

namespace miot {

/// Per-entity tallies. Everything except the gauges is monotonic; the
/// runner reconciles the event-backed ones against the transcript.
struct Counters {
  std::uint64_t full_auths = 0;
  std::uint64_t challenges_issued = 0;
  std::uint64_t handoffs_completed = 0;
  std::uint64_t replays_detected = 0;
  std::uint64_t tampers_detected = 0;
  std::uint64_t jamming_alerts = 0;
  std::uint64_t rejects_sent = 0;
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_received = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t aead_ops = 0;
  std::uint64_t hash_ops = 0;
  std::uint64_t denylist_size = 0;  // gauge
  std::uint64_t cache_entries = 0;  // gauge

  double energy_proxy(const Params& p) const {
    return p.energy_aead * static_cast<double>(aead_ops) +
           p.energy_hash * static_cast<double>(hash_ops) +
           p.energy_byte * static_cast<double>(bytes_sent);
  }
};

/// Security-relevant observation an entity makes while handling input.
/// The world turns these into transcript lines; counter bumps happen in
/// the same place the note is raised, so the two cannot drift apart.
struct Note {
  std::string what;
  std::string detail;
};

/// Everything an entity hands back from one handler call.
struct Outbox {
  std::vector<Frame> frames;
  std::vector<Note> notes;

  void say(std::string what, std::string detail = "") {
    notes.push_back({std::move(what), std::move(detail)});
  }
  void merge(Outbox&& other) {
    for (auto& f : other.frames) frames.push_back(std::move(f));
    for (auto& n : other.notes) notes.push_back(std::move(n));
  }
};

/// Crypto front end that charges every operation to an entity's
/// counters. Entities never call the primitives directly; the energy
/// proxy is only as honest as this funnel.
class CryptoMeter {
 public:
  explicit CryptoMeter(Counters& c) : c_(c) {}

  Bytes seal(const SymmetricKey& key, const ChallengeNonce& nonce, ByteSpan aad,
             ByteSpan pt) {
    ++c_.aead_ops;
    return aead_seal(key, nonce, aad, pt);
  }
  AeadOpenResult open(const SymmetricKey& key, const ChallengeNonce& nonce,
                      ByteSpan aad, ByteSpan ct) {
    ++c_.aead_ops;
    return aead_open(key, nonce, aad, ct);
  }
  AppDigest hash(ByteSpan msg) {
    ++c_.hash_ops;
    return lw_hash(msg);
  }
  void seal_frame(Frame& f, const SymmetricKey& key, const ChallengeNonce& nonce,
                  ByteSpan body) {
    ++c_.aead_ops;
    seal_body(f, key, nonce, body);
  }
  AeadOpenResult open_frame(const Frame& f, const SymmetricKey& key) {
    ++c_.aead_ops;
    return open_body(f, key);
  }
  Bytes solve(const SymmetricKey& psk, const ChallengeNonce& challenge,
              const DeviceFingerprint& fp, const ChallengeNonce& responder_nonce) {
    ++c_.aead_ops;
    return solve_challenge(psk, challenge, fp, responder_nonce);
  }
  std::optional<ChallengeNonce> verify(const SymmetricKey& psk,
                                       const ChallengeNonce& challenge,
                                       const DeviceFingerprint& expected,
                                       ByteSpan response) {
    ++c_.aead_ops;
    return verify_challenge(psk, challenge, expected, response);
  }
  SymmetricKey derive(const SymmetricKey& base, const ChallengeNonce& challenge,
                      const ChallengeNonce& responder_nonce) {
    ++c_.hash_ops;
    return derive_session_key(base, challenge, responder_nonce);
  }

 private:
  Counters& c_;
};

}  // namespace miot
