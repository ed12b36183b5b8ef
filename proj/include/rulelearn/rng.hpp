#ifndef RULELEARN_RNG_HPP
#define RULELEARN_RNG_HPP

#include <cstdint>
#include <random>
#include <string>

namespace rulelearn {

// splitmix64 step; used to expand one user seed into independent sub-seeds
// so that no two modules ever consume the same raw stream.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

// Derives named sub-seeds from a root seed. derive("negatives", step) and
// derive("init") never collide because the tag is hashed into the stream.
class SeedSequencer {
 public:
  explicit SeedSequencer(std::uint64_t root) : root_(root) {}

  std::uint64_t derive(const std::string& tag, std::uint64_t index = 0) const {
    std::uint64_t s = root_ ^ fnv1a64(tag) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    return splitmix64(s);
  }

  std::mt19937_64 engine(const std::string& tag, std::uint64_t index = 0) const {
    return std::mt19937_64(derive(tag, index));
  }

 private:
  std::uint64_t root_;
};

}  // namespace rulelearn

#endif
