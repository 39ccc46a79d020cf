#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace spe {

// 64-bit FNV-1a; used for provenance hashes, not for security.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  template <class T>
  void update(std::span<const T> v) {
    update(v.data(), v.size_bytes());
  }
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hash_file(const std::string& path);

}  // namespace spe
