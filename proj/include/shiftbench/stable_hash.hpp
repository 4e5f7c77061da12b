#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>

namespace shiftbench {

/// Platform-independent 64-bit hash over a sequence of typed parts.
///
/// Each part is encoded as a one-byte tag followed by a little-endian payload:
///   'i' + 8 bytes   signed/unsigned integers (two's complement, widened to 64 bits)
///   'f' + 8 bytes   doubles (IEEE-754 bit pattern)
///   's' + 8 bytes length + raw bytes   strings
/// The byte stream is fed through FNV-1a (offset 0xcbf29ce484222325, prime
/// 0x100000001b3) and the result is passed through the SplitMix64 finalizer.
/// Part order matters, so stable_hash(a, b) != stable_hash(b, a) in general.
class StableHasher {
 public:
  StableHasher& add(std::int64_t v);
  StableHasher& add(std::uint64_t v);
  StableHasher& add(double v);
  StableHasher& add(std::string_view s);

  std::uint64_t finish() const;

 private:
  void feed_byte(std::uint8_t b);
  void feed_u64(std::uint64_t v);

  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t splitmix64(std::uint64_t x);

namespace detail {

template <typename T>
void add_part(StableHasher& h, const T& part) {
  using U = std::decay_t<T>;
  if constexpr (std::is_same_v<U, bool>) {
    h.add(static_cast<std::int64_t>(part));
  } else if constexpr (std::is_integral_v<U> && std::is_signed_v<U>) {
    h.add(static_cast<std::int64_t>(part));
  } else if constexpr (std::is_integral_v<U>) {
    h.add(static_cast<std::uint64_t>(part));
  } else if constexpr (std::is_floating_point_v<U>) {
    h.add(static_cast<double>(part));
  } else {
    h.add(std::string_view(part));
  }
}

}  // namespace detail

template <typename... Parts>
std::uint64_t stable_hash(const Parts&... parts) {
  StableHasher h;
  (detail::add_part(h, parts), ...);
  return h.finish();
}

}  // namespace shiftbench
