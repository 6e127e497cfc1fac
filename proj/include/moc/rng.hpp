#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "moc/common.hpp"

namespace moc {

// splitmix64 mix; derives independent substream seeds from one run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (key + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic sampling stream. The transforms of the raw mt19937_64 output
// are implemented here instead of with std::*_distribution, whose algorithms
// differ between standard libraries; the same seed must give the same draws
// in every build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0, 1); never returns an exact endpoint.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the paired draw is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Exponential with the given rate; strictly positive.
  double exponential(double rate) {
    require(rate > 0.0, ErrorCategory::argument, "exponential rate must be > 0");
    return -std::log(uniform()) / rate;
  }

  // Knuth's product method; fine for the small means used here.
  int poisson(double mean) {
    require(mean >= 0.0, ErrorCategory::argument, "poisson mean must be >= 0");
    if (mean == 0.0) return 0;
    const double limit = std::exp(-mean);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  // Unbiased integer in [0, n).
  std::uint64_t bounded(std::uint64_t n) {
    require(n > 0, ErrorCategory::argument, "bounded(n) requires n > 0");
    if (n == 1) return 0;
    const std::uint64_t threshold = (-n) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t x = engine_();
      if (x >= threshold) return x % n;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Exact state round-trip (engine plus the Box-Muller cache).
  std::string state_string() const {
    std::ostringstream oss;
    oss << engine_ << ' ' << (has_cached_ ? 1 : 0) << ' '
        << std::bit_cast<std::uint64_t>(cached_);
    return oss.str();
  }

  void set_state(const std::string& state) {
    std::istringstream iss(state);
    int cache_flag = 0;
    std::uint64_t cache_bits = 0;
    iss >> engine_ >> cache_flag >> cache_bits;
    require(!iss.fail(), ErrorCategory::format, "malformed RNG state string");
    has_cached_ = cache_flag != 0;
    cached_ = std::bit_cast<double>(cache_bits);
  }

 private:
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace moc
