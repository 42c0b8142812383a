#include "miot/rng.hpp"

namespace miot {

Bytes DetRng::bytes(std::size_t n) {
  Bytes out;
  out.reserve(n);
  while (out.size() < n) {
    std::uint64_t w = next_u64();
    for (int shift = 56; shift >= 0 && out.size() < n; shift -= 8) {
      out.push_back(static_cast<std::uint8_t>(w >> shift));
    }
  }
  return out;
}

std::array<std::uint8_t, 16> DetRng::bytes16() {
  std::array<std::uint8_t, 16> out{};
  Bytes b = bytes(16);
  std::copy(b.begin(), b.end(), out.begin());
  return out;
}

}  // namespace miot
