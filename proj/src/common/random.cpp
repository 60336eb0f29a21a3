#include "vpure/common/random.hpp"

#include <cmath>

namespace vpure {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                          std::uint64_t index) {
  return splitmix64(splitmix64(base ^ fnv1a(tag)) + index);
}

std::vector<double> normal_vector(Rng& rng, std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

std::vector<std::complex<double>> complex_normal_vector(Rng& rng,
                                                        std::size_t n) {
  std::normal_distribution<double> dist(0.0, std::sqrt(0.5));
  std::vector<std::complex<double>> out(n);
  for (auto& v : out) {
    const double re = dist(rng);
    const double im = dist(rng);
    v = {re, im};
  }
  return out;
}

}  // namespace vpure
