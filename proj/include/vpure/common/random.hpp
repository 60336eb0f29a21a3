#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace vpure {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed, a stage tag and an
/// index. Every stochastic stage in the pipeline takes its seed from here so
/// that streams never alias.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                          std::uint64_t index = 0);

std::vector<double> normal_vector(Rng& rng, std::size_t n);

/// Circular complex standard normal: real and imaginary parts are
/// independent N(0, 1/2), so E|z|^2 = 1.
std::vector<std::complex<double>> complex_normal_vector(Rng& rng,
                                                        std::size_t n);

}  // namespace vpure
