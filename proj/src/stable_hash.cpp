#include "shiftbench/stable_hash.hpp"

#include <bit>
#include <cstring>

namespace shiftbench {

namespace {
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
}

void StableHasher::feed_byte(std::uint8_t b) {
  state_ ^= b;
  state_ *= kFnvPrime;
}

void StableHasher::feed_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) feed_byte(static_cast<std::uint8_t>(v >> (8 * i)));
}

StableHasher& StableHasher::add(std::int64_t v) {
  feed_byte('i');
  feed_u64(static_cast<std::uint64_t>(v));
  return *this;
}

StableHasher& StableHasher::add(std::uint64_t v) {
  feed_byte('i');
  feed_u64(v);
  return *this;
}

StableHasher& StableHasher::add(double v) {
  feed_byte('f');
  feed_u64(std::bit_cast<std::uint64_t>(v));
  return *this;
}

StableHasher& StableHasher::add(std::string_view s) {
  feed_byte('s');
  feed_u64(s.size());
  for (char c : s) feed_byte(static_cast<std::uint8_t>(c));
  return *this;
}

std::uint64_t StableHasher::finish() const { return splitmix64(state_); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace shiftbench
