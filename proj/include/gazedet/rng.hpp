#pragma once

#include <cstdint>
#include <string_view>

namespace gazedet {

// FNV-1a, used to derive child seeds from string labels.
uint64_t hash_label(std::string_view label);

// Deterministic generator (splitmix64 core). The std distributions are not
// bit-stable across standard library implementations, so uniform/normal are
// implemented by hand. All randomness in the project flows through this type.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

  uint64_t next_u64();

  // [0, 1)
  double uniform();
  double uniform(double lo, double hi);

  // inclusive bounds
  int uniform_int(int lo, int hi);

  // Box-Muller; one draw per call
  double normal(double mean, double sigma);

  // Child stream derived from the original seed and a label, independent of
  // how many values this generator has produced.
  Rng child(std::string_view label) const;
  Rng child(std::string_view label, uint64_t index) const;

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t state_;
};

}  // namespace gazedet
