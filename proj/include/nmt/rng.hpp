#pragma once

#include <cstdint>
#include <vector>

namespace nmt {

// Natural log built from IEEE-exact add/mul/div only (argument reduction via
// frexp, then the atanh series of log((1+t)/(1-t))). Bit-reproducible across
// platforms and libm versions, accurate to a couple of ulp. Used wherever a
// checkpoint-reproducible stream depends on a log.
double portable_log(double x);

// xoshiro256++ seeded through splitmix64. The algorithm is part of the file
// and checkpoint contract: the same seed must give the same stream on every
// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // [0, 1), 53-bit mantissa
  double uniform();
  double uniform(double lo, double hi);

  // standard normal via the Marsaglia polar method with portable_log
  double gaussian();

  // unbiased integer in [0, n), n >= 1
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // One-way combine for deriving independent sub-seeds (splitmix64 over the
  // concatenation).
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

 private:
  std::uint64_t state_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nmt
