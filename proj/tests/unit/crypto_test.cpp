#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "miot/crypto.hpp"
#include "miot/rng.hpp"

using namespace miot;

namespace {

struct KatRecord {
  std::map<std::string, std::string> fields;
  const std::string& at(const std::string& key) const { return fields.at(key); }
};

std::vector<KatRecord> read_kat(const std::string& path) {
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), "missing KAT file ", path);
  std::vector<KatRecord> records;
  KatRecord current;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!current.fields.empty()) records.push_back(std::move(current));
      current = {};
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) {
      const auto bare = line.find(" =");
      REQUIRE(bare != std::string::npos);
      current.fields[line.substr(0, bare)] = "";
      continue;
    }
    current.fields[line.substr(0, eq)] = line.substr(eq + 3);
  }
  if (!current.fields.empty()) records.push_back(std::move(current));
  return records;
}

template <std::size_t N>
std::array<std::uint8_t, N> to_array(const Bytes& b) {
  REQUIRE(b.size() == N);
  std::array<std::uint8_t, N> out{};
  std::copy(b.begin(), b.end(), out.begin());
  return out;
}

ByteSpan span(const Bytes& b) { return ByteSpan(b.data(), b.size()); }

}  // namespace

TEST_CASE("aead matches the full known-answer corpus") {
  const auto records =
      read_kat(std::string(MIOT_TEST_DATA_DIR) + "/LWC_AEAD_KAT_128_128.txt");
  REQUIRE(records.size() >= 100);
  std::size_t tamper_checked = 0;
  for (const KatRecord& r : records) {
    INFO("Count = ", r.at("Count"));
    const auto key = to_array<kKeyLen>(from_hex(r.at("Key")));
    const auto nonce = to_array<kNonceLen>(from_hex(r.at("Nonce")));
    const Bytes pt = from_hex(r.at("PT"));
    const Bytes ad = from_hex(r.at("AD"));
    const Bytes ct = from_hex(r.at("CT"));

    const Bytes sealed = aead_seal(key, nonce, span(ad), span(pt));
    CHECK(sealed == ct);

    const AeadOpenResult opened = aead_open(key, nonce, span(ad), span(ct));
    REQUIRE(opened.ok());
    CHECK(*opened.pt == pt);

    // Any flipped bit must void the tag.
    Bytes bad = ct;
    bad[r.fields.count("Count") ? std::stoul(r.at("Count")) % bad.size() : 0] ^= 0x01;
    const AeadOpenResult refused = aead_open(key, nonce, span(ad), span(bad));
    CHECK_FALSE(refused.ok());
    CHECK(refused.err == AeadError::auth_failure);
    ++tamper_checked;
  }
  CHECK(tamper_checked == records.size());
}

TEST_CASE("hash matches the full known-answer corpus") {
  const auto records =
      read_kat(std::string(MIOT_TEST_DATA_DIR) + "/LWC_HASH_KAT_256.txt");
  REQUIRE(records.size() >= 100);
  for (const KatRecord& r : records) {
    INFO("Count = ", r.at("Count"));
    const Bytes msg = from_hex(r.at("Msg"));
    const Bytes md = from_hex(r.at("MD"));
    const AppDigest got = lw_hash(span(msg));
    CHECK(Bytes(got.begin(), got.end()) == md);
  }
}

TEST_CASE("open rejects truncated ciphertexts without throwing") {
  const SymmetricKey key{};
  const ChallengeNonce nonce{};
  const Bytes short_ct(kTagLen - 1, 0x42);
  const AeadOpenResult r = aead_open(key, nonce, ByteSpan(), span(short_ct));
  CHECK_FALSE(r.ok());
  CHECK(r.err == AeadError::length_error);
}

TEST_CASE("aad is authenticated") {
  DetRng rng(5);
  SymmetricKey key = rng.bytes16();
  ChallengeNonce nonce = rng.bytes16();
  const Bytes pt{1, 2, 3};
  const Bytes aad{9, 9, 9};
  const Bytes ct = aead_seal(key, nonce, span(aad), span(pt));
  const Bytes other{9, 9, 8};
  CHECK(aead_open(key, nonce, span(aad), span(ct)).ok());
  CHECK_FALSE(aead_open(key, nonce, span(other), span(ct)).ok());
  CHECK_FALSE(aead_open(key, nonce, ByteSpan(), span(ct)).ok());
}

TEST_CASE("fingerprints separate kind, id, model, and salt") {
  const Bytes salt{1, 2, 3, 4};
  const Bytes salt2{1, 2, 3, 5};
  const auto base = fingerprint_of(0, 7, "sensor", span(salt));
  CHECK(base == fingerprint_of(0, 7, "sensor", span(salt)));
  CHECK(base != fingerprint_of(1, 7, "sensor", span(salt)));
  CHECK(base != fingerprint_of(0, 8, "sensor", span(salt)));
  CHECK(base != fingerprint_of(0, 7, "sensor2", span(salt)));
  CHECK(base != fingerprint_of(0, 7, "sensor", span(salt2)));
}

TEST_CASE("challenge responses verify and bind every input") {
  DetRng rng(11);
  const SymmetricKey psk = rng.bytes16();
  const ChallengeNonce challenge = rng.bytes16();
  const ChallengeNonce responder = rng.bytes16();
  const Bytes salt{0xaa};
  const DeviceFingerprint fp = fingerprint_of(0, 3, "sensor", span(salt));

  const Bytes resp = solve_challenge(psk, challenge, fp, responder);
  REQUIRE(resp.size() == kNonceLen + kFingerprintLen + kTagLen);

  const auto ok = verify_challenge(psk, challenge, fp, span(resp));
  REQUIRE(ok.has_value());
  CHECK(*ok == responder);

  SymmetricKey wrong_psk = psk;
  wrong_psk[0] ^= 1;
  CHECK_FALSE(verify_challenge(wrong_psk, challenge, fp, span(resp)));

  ChallengeNonce wrong_challenge = challenge;
  wrong_challenge[15] ^= 1;
  CHECK_FALSE(verify_challenge(psk, wrong_challenge, fp, span(resp)));

  const DeviceFingerprint other_fp = fingerprint_of(0, 4, "sensor", span(salt));
  CHECK_FALSE(verify_challenge(psk, challenge, other_fp, span(resp)));

  Bytes clipped(resp.begin(), resp.end() - 1);
  CHECK_FALSE(verify_challenge(psk, challenge, fp, span(clipped)));

  for (std::size_t i = 0; i < resp.size(); ++i) {
    Bytes bad = resp;
    bad[i] ^= 0x80;
    CHECK_FALSE(verify_challenge(psk, challenge, fp, span(bad)));
  }
}

TEST_CASE("session keys depend on the base key and both nonces") {
  DetRng rng(13);
  const SymmetricKey base = rng.bytes16();
  const ChallengeNonce a = rng.bytes16();
  const ChallengeNonce b = rng.bytes16();
  const SymmetricKey k = derive_session_key(base, a, b);
  CHECK(k == derive_session_key(base, a, b));

  SymmetricKey base2 = base;
  base2[5] ^= 1;
  CHECK(k != derive_session_key(base2, a, b));
  ChallengeNonce a2 = a;
  a2[0] ^= 1;
  CHECK(k != derive_session_key(base, a2, b));
  ChallengeNonce b2 = b;
  b2[0] ^= 1;
  CHECK(k != derive_session_key(base, a, b2));
  CHECK(k != derive_session_key(base, b, a));
}

TEST_CASE("nonce issuer never repeats and remembers what it issued") {
  DetRng rng(17);
  NonceIssuer issuer;
  std::set<ChallengeNonce> seen;
  for (int i = 0; i < 2000; ++i) {
    const ChallengeNonce n = issuer.issue(rng);
    CHECK(seen.insert(n).second);
    CHECK(issuer.seen(n));
  }
  ChallengeNonce fresh{};
  fresh[0] = 0xfe;
  CHECK_FALSE(issuer.seen(fresh));
}

TEST_CASE("constant-time compare handles all shapes") {
  const Bytes a{1, 2, 3};
  const Bytes b{1, 2, 3};
  const Bytes c{1, 2, 4};
  const Bytes d{1, 2};
  CHECK(ct_equal(span(a), span(b)));
  CHECK_FALSE(ct_equal(span(a), span(c)));
  CHECK_FALSE(ct_equal(span(a), span(d)));
  CHECK(ct_equal(ByteSpan(), ByteSpan()));
}

TEST_CASE("hex codec round-trips and rejects junk") {
  const Bytes b{0x00, 0x7f, 0xff};
  CHECK(to_hex(span(b)) == "007fff");
  CHECK(from_hex("007FFF") == b);
  CHECK(from_hex("") == Bytes{});
  CHECK_THROWS_AS(from_hex("0"), std::invalid_argument);
  CHECK_THROWS_AS(from_hex("zz"), std::invalid_argument);
}
