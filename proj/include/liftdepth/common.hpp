#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace liftdepth {

// Thrown when tensor extents do not line up (channel mismatch, bad matmul
// dimensions, wrong input size, ...).
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for invalid configuration (c does not divide n, odd channel count
// where an even one is required, unknown config keys, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for invalid runtime values (nonpositive depth under a mask,
// unnormalized probabilities, negative bin widths, ...).
class ValueError : public std::runtime_error {
 public:
  explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown by file readers on malformed input; carries the byte offset at
// which parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& msg, std::int64_t byte_offset)
      : std::runtime_error(msg + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::int64_t byte_offset() const { return byte_offset_; }

 private:
  std::int64_t byte_offset_;
};

using Shape = std::vector<int>;

inline int numel(const Shape& s) {
  int n = 1;
  for (int e : s) {
    if (e <= 0) throw ShapeError("nonpositive extent in shape");
    n *= e;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Deterministic xoshiro-free generator: std::mt19937_64 bit stream with a
// fixed uint64 -> double mapping so that sequences are identical across
// platforms and standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // splitmix64 warm-up so nearby seeds decorrelate
    for (int i = 0; i < 4; ++i) next_u64();
  }

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1) with 53-bit resolution
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi] inclusive
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw ValueError("uniform_int: empty range");
    std::uint64_t span = std::uint64_t(hi - lo) + 1;
    return lo + int(next_u64() % span);
  }

 private:
  std::uint64_t state_;
};

}  // namespace liftdepth
