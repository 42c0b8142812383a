#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string_view>

#include "miot/bytes.hpp"
#include "miot/rng.hpp"

namespace miot {

inline constexpr std::size_t kKeyLen = 16;
inline constexpr std::size_t kNonceLen = 16;
inline constexpr std::size_t kTagLen = 16;
inline constexpr std::size_t kDigestLen = 32;
inline constexpr std::size_t kFingerprintLen = 16;

using SymmetricKey = std::array<std::uint8_t, kKeyLen>;
using ChallengeNonce = std::array<std::uint8_t, kNonceLen>;
using DeviceFingerprint = std::array<std::uint8_t, kFingerprintLen>;
using AppDigest = std::array<std::uint8_t, kDigestLen>;

enum class AeadError { none, auth_failure, length_error };

struct AeadOpenResult {
  std::optional<Bytes> pt;
  AeadError err = AeadError::none;
  bool ok() const { return pt.has_value(); }
};

/// Authenticated encryption, 128-bit key/nonce/tag. Output is
/// ciphertext (pt.size() bytes) followed by the tag.
Bytes aead_seal(const SymmetricKey& key, const ChallengeNonce& nonce, ByteSpan aad,
                ByteSpan pt);

/// Inverse of aead_seal. ct must include the trailing tag. Rejects
/// without a plaintext on any tag mismatch.
AeadOpenResult aead_open(const SymmetricKey& key, const ChallengeNonce& nonce,
                         ByteSpan aad, ByteSpan ct);

/// 256-bit lightweight hash.
AppDigest lw_hash(ByteSpan msg);

/// Stable identity fingerprint bound to entity kind, id, and model tag.
DeviceFingerprint fingerprint_of(std::uint8_t kind, std::uint64_t id,
                                 std::string_view model, ByteSpan salt);

/// Issues fresh 16-byte nonces and guarantees no value repeats within
/// one issuer. Challenge nonces double as AEAD nonces, so reuse under a
/// long-lived key would be fatal.
class NonceIssuer {
 public:
  ChallengeNonce issue(DetRng& rng);
  bool seen(const ChallengeNonce& n) const { return used_.count(n) != 0; }

 private:
  std::set<ChallengeNonce> used_;
};

/// Responder's proof of key possession: fresh responder nonce, then the
/// responder fingerprint sealed under psk with the challenge as nonce and
/// the responder nonce as associated data. 48 bytes total.
Bytes solve_challenge(const SymmetricKey& psk, const ChallengeNonce& challenge,
                      const DeviceFingerprint& fingerprint,
                      const ChallengeNonce& responder_nonce);

/// Checks a 48-byte response against the expected fingerprint. Returns
/// the responder nonce on success, nothing on any failure (wrong length,
/// bad tag, fingerprint mismatch all look identical to the caller).
std::optional<ChallengeNonce> verify_challenge(const SymmetricKey& psk,
                                               const ChallengeNonce& challenge,
                                               const DeviceFingerprint& expected,
                                               ByteSpan response);

/// Fresh session key from a base key and the two nonces of a completed
/// challenge exchange. Both sides compute it; it never crosses the wire.
SymmetricKey derive_session_key(const SymmetricKey& base, const ChallengeNonce& challenge,
                                const ChallengeNonce& responder_nonce);

}  // namespace miot
