#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace defembed {

// 64-bit FNV-1a. Used for vocabulary/store fingerprints and checkpoint ids.
class Fnv1a {
 public:
  void update(std::string_view bytes) noexcept {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(const void* data, std::size_t size) noexcept {
    update(std::string_view(static_cast<const char*>(data), size));
  }
  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace defembed
