#include "miot/crypto.hpp"

#include <bit>
#include <cstring>

namespace miot {
namespace {

// Ascon-AEAD128 and Ascon-Hash256 (NIST SP 800-232). Words are loaded
// and stored little-endian.

constexpr std::uint64_t kAeadIv = 0x00001000808c0001ULL;
constexpr std::uint64_t kHashIv = 0x0000080100cc0002ULL;
constexpr std::uint64_t kDomainSep = 0x8000000000000000ULL;

constexpr std::uint8_t kRoundConst[16] = {0x3c, 0x2d, 0x1e, 0x0f, 0xf0, 0xe1,
                                          0xd2, 0xc3, 0xb4, 0xa5, 0x96, 0x87,
                                          0x78, 0x69, 0x5a, 0x4b};

struct State {
  std::uint64_t x[5];
};

std::uint64_t load_word(const std::uint8_t* p, std::size_t n = 8) {
  std::uint64_t w = 0;
  for (std::size_t i = 0; i < n; ++i) {
    w |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  }
  return w;
}

void store_word(std::uint8_t* p, std::uint64_t w, std::size_t n = 8) {
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = static_cast<std::uint8_t>(w >> (8 * i));
  }
}

void permute(State& s, int rounds) {
  for (int r = 16 - rounds; r < 16; ++r) {
    s.x[2] ^= kRoundConst[r];

    s.x[0] ^= s.x[4];
    s.x[4] ^= s.x[3];
    s.x[2] ^= s.x[1];
    const std::uint64_t t0 = ~s.x[0] & s.x[1];
    const std::uint64_t t1 = ~s.x[1] & s.x[2];
    const std::uint64_t t2 = ~s.x[2] & s.x[3];
    const std::uint64_t t3 = ~s.x[3] & s.x[4];
    const std::uint64_t t4 = ~s.x[4] & s.x[0];
    s.x[0] ^= t1;
    s.x[1] ^= t2;
    s.x[2] ^= t3;
    s.x[3] ^= t4;
    s.x[4] ^= t0;
    s.x[1] ^= s.x[0];
    s.x[0] ^= s.x[4];
    s.x[3] ^= s.x[2];
    s.x[2] = ~s.x[2];

    s.x[0] ^= std::rotr(s.x[0], 19) ^ std::rotr(s.x[0], 28);
    s.x[1] ^= std::rotr(s.x[1], 61) ^ std::rotr(s.x[1], 39);
    s.x[2] ^= std::rotr(s.x[2], 1) ^ std::rotr(s.x[2], 6);
    s.x[3] ^= std::rotr(s.x[3], 10) ^ std::rotr(s.x[3], 17);
    s.x[4] ^= std::rotr(s.x[4], 7) ^ std::rotr(s.x[4], 41);
  }
}

// XOR of 0x01 into byte position `off` of a 16-byte rate block.
void pad_rate16(State& s, std::size_t off) {
  if (off < 8) {
    s.x[0] ^= 0x01ULL << (8 * off);
  } else {
    s.x[1] ^= 0x01ULL << (8 * (off - 8));
  }
}

State aead_init(const SymmetricKey& key, const ChallengeNonce& nonce,
                std::uint64_t& k0, std::uint64_t& k1) {
  k0 = load_word(key.data());
  k1 = load_word(key.data() + 8);
  State s{{kAeadIv, k0, k1, load_word(nonce.data()), load_word(nonce.data() + 8)}};
  permute(s, 12);
  s.x[3] ^= k0;
  s.x[4] ^= k1;
  return s;
}

void absorb_ad(State& s, ByteSpan aad) {
  if (!aad.empty()) {
    const std::uint8_t* p = aad.data();
    std::size_t len = aad.size();
    while (len >= 16) {
      s.x[0] ^= load_word(p);
      s.x[1] ^= load_word(p + 8);
      permute(s, 8);
      p += 16;
      len -= 16;
    }
    if (len >= 8) {
      s.x[0] ^= load_word(p);
      s.x[1] ^= load_word(p + 8, len - 8);
    } else {
      s.x[0] ^= load_word(p, len);
    }
    pad_rate16(s, len);
    permute(s, 8);
  }
  s.x[4] ^= kDomainSep;
}

void finalize_tag(State& s, std::uint64_t k0, std::uint64_t k1, std::uint8_t* tag) {
  s.x[2] ^= k0;
  s.x[3] ^= k1;
  permute(s, 12);
  store_word(tag, s.x[3] ^ k0);
  store_word(tag + 8, s.x[4] ^ k1);
}

}  // namespace

Bytes aead_seal(const SymmetricKey& key, const ChallengeNonce& nonce, ByteSpan aad,
                ByteSpan pt) {
  std::uint64_t k0, k1;
  State s = aead_init(key, nonce, k0, k1);
  absorb_ad(s, aad);

  Bytes out(pt.size() + kTagLen);
  const std::uint8_t* p = pt.data();
  std::uint8_t* c = out.data();
  std::size_t len = pt.size();
  while (len >= 16) {
    s.x[0] ^= load_word(p);
    s.x[1] ^= load_word(p + 8);
    store_word(c, s.x[0]);
    store_word(c + 8, s.x[1]);
    permute(s, 8);
    p += 16;
    c += 16;
    len -= 16;
  }
  if (len >= 8) {
    s.x[0] ^= load_word(p);
    s.x[1] ^= load_word(p + 8, len - 8);
    store_word(c, s.x[0]);
    store_word(c + 8, s.x[1], len - 8);
  } else {
    s.x[0] ^= load_word(p, len);
    store_word(c, s.x[0], len);
  }
  pad_rate16(s, len);

  finalize_tag(s, k0, k1, out.data() + pt.size());
  return out;
}

AeadOpenResult aead_open(const SymmetricKey& key, const ChallengeNonce& nonce,
                         ByteSpan aad, ByteSpan ct) {
  if (ct.size() < kTagLen) {
    return {std::nullopt, AeadError::length_error};
  }
  std::uint64_t k0, k1;
  State s = aead_init(key, nonce, k0, k1);
  absorb_ad(s, aad);

  Bytes pt(ct.size() - kTagLen);
  const std::uint8_t* c = ct.data();
  std::uint8_t* p = pt.data();
  std::size_t len = pt.size();
  while (len >= 16) {
    const std::uint64_t c0 = load_word(c);
    const std::uint64_t c1 = load_word(c + 8);
    store_word(p, s.x[0] ^ c0);
    store_word(p + 8, s.x[1] ^ c1);
    s.x[0] = c0;
    s.x[1] = c1;
    permute(s, 8);
    c += 16;
    p += 16;
    len -= 16;
  }
  // Partial block: recover plaintext bytes, then splice the ciphertext
  // bytes into the state so the keystream tail stays intact.
  std::uint8_t rate[16];
  store_word(rate, s.x[0]);
  store_word(rate + 8, s.x[1]);
  for (std::size_t i = 0; i < len; ++i) {
    p[i] = static_cast<std::uint8_t>(c[i] ^ rate[i]);
    rate[i] = c[i];
  }
  s.x[0] = load_word(rate);
  s.x[1] = load_word(rate + 8);
  pad_rate16(s, len);

  std::uint8_t tag[kTagLen];
  finalize_tag(s, k0, k1, tag);
  if (!ct_equal(ByteSpan(tag, kTagLen), ct.subspan(ct.size() - kTagLen))) {
    return {std::nullopt, AeadError::auth_failure};
  }
  return {std::move(pt), AeadError::none};
}

AppDigest lw_hash(ByteSpan msg) {
  State s{{kHashIv, 0, 0, 0, 0}};
  permute(s, 12);

  const std::uint8_t* p = msg.data();
  std::size_t len = msg.size();
  while (len >= 8) {
    s.x[0] ^= load_word(p);
    permute(s, 12);
    p += 8;
    len -= 8;
  }
  s.x[0] ^= load_word(p, len);
  s.x[0] ^= 0x01ULL << (8 * len);
  permute(s, 12);

  AppDigest out{};
  for (std::size_t i = 0; i < 4; ++i) {
    store_word(out.data() + 8 * i, s.x[0]);
    if (i < 3) permute(s, 12);
  }
  return out;
}

DeviceFingerprint fingerprint_of(std::uint8_t kind, std::uint64_t id,
                                 std::string_view model, ByteSpan salt) {
  Bytes msg;
  msg.push_back(kind);
  put_u64(msg, id);
  msg.insert(msg.end(), model.begin(), model.end());
  msg.insert(msg.end(), salt.begin(), salt.end());
  const AppDigest d = lw_hash(msg);
  DeviceFingerprint fp{};
  std::memcpy(fp.data(), d.data(), kFingerprintLen);
  return fp;
}

ChallengeNonce NonceIssuer::issue(DetRng& rng) {
  for (;;) {
    ChallengeNonce n = rng.bytes16();
    if (used_.insert(n).second) {
      return n;
    }
  }
}

Bytes solve_challenge(const SymmetricKey& psk, const ChallengeNonce& challenge,
                      const DeviceFingerprint& fingerprint,
                      const ChallengeNonce& responder_nonce) {
  Bytes out(responder_nonce.begin(), responder_nonce.end());
  Bytes sealed = aead_seal(psk, challenge, responder_nonce, fingerprint);
  out.insert(out.end(), sealed.begin(), sealed.end());
  return out;
}

std::optional<ChallengeNonce> verify_challenge(const SymmetricKey& psk,
                                               const ChallengeNonce& challenge,
                                               const DeviceFingerprint& expected,
                                               ByteSpan response) {
  if (response.size() != kNonceLen + kFingerprintLen + kTagLen) {
    return std::nullopt;
  }
  ChallengeNonce responder_nonce;
  std::memcpy(responder_nonce.data(), response.data(), kNonceLen);
  AeadOpenResult r = aead_open(psk, challenge, responder_nonce,
                               response.subspan(kNonceLen));
  if (!r.ok() || !ct_equal(*r.pt, expected)) {
    return std::nullopt;
  }
  return responder_nonce;
}

SymmetricKey derive_session_key(const SymmetricKey& base, const ChallengeNonce& challenge,
                                const ChallengeNonce& responder_nonce) {
  Bytes msg(base.begin(), base.end());
  msg.insert(msg.end(), challenge.begin(), challenge.end());
  msg.insert(msg.end(), responder_nonce.begin(), responder_nonce.end());
  const AppDigest d = lw_hash(msg);
  SymmetricKey key{};
  std::memcpy(key.data(), d.data(), kKeyLen);
  return key;
}

}  // namespace miot
