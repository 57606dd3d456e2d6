#pragma once

#include <array>
#include <cstdint>

namespace qfluct {

// Philox4x32-10 counter-based generator. Streams are independent for
// distinct (key, stream) pairs; identical pairs replay bit-identical
// sequences regardless of thread scheduling, which the reproducibility
// contract of every randomized stage relies on.
struct Philox {
  uint64_t key = 0;
  uint64_t stream = 0;

  std::array<uint32_t, 4> block(uint64_t counter) const;
};

// Stable 64-bit combiner for deriving substream ids from structured
// indices (repetition, circuit, replica, ...).
uint64_t mix64(uint64_t a, uint64_t b);

// Stateful convenience wrapper over Philox with scalar distributions.
class Rng {
 public:
  Rng(uint64_t seed, uint64_t stream) : gen_{seed, stream} {}

  uint32_t next_u32();
  uint64_t next_u64();
  double uniform();      // [0, 1)
  double uniform_pos();  // (0, 1]
  double normal();       // standard normal, Box-Muller
  double exponential(double rate);
  bool bernoulli(double p);
  // Exact for n <= 4096 (sum of Bernoulli draws); clamped rounded normal
  // approximation beyond, far past every n_eff this pipeline produces.
  long binomial(long n, double p);

 private:
  Philox gen_;
  uint64_t counter_ = 0;
  std::array<uint32_t, 4> buf_{};
  int buf_pos_ = 4;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace qfluct
