#include "gazedet/rng.hpp"

#include <cmath>

namespace gazedet {

uint64_t hash_label(std::string_view label) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {
uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  // 53 mantissa bits -> [0, 1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int lo, int hi) {
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(next_u64() % span);
}

double Rng::normal(double mean, double sigma) {
  const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + sigma * r * std::cos(2.0 * M_PI * u2);
}

Rng Rng::child(std::string_view label) const {
  uint64_t s = seed_ ^ hash_label(label);
  return Rng(splitmix64(s));
}

Rng Rng::child(std::string_view label, uint64_t index) const {
  uint64_t s = seed_ ^ hash_label(label) ^ (0x9e3779b97f4a7c15ull * (index + 1));
  return Rng(splitmix64(s));
}

}  // namespace gazedet
