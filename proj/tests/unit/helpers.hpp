#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <doctest.h>

#include "vpure/audio/waveform.hpp"
#include "vpure/common/error.hpp"
#include "vpure/common/random.hpp"

namespace testutil {

inline double snr_db(const std::vector<double>& ref, const std::vector<double>& est) {
  double s = 0.0, e = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    s += ref[i] * ref[i];
    e += (ref[i] - est[i]) * (ref[i] - est[i]);
  }
  return 10.0 * std::log10(s / e);
}

inline vpure::audio::Waveform white_noise(std::size_t n, std::uint64_t seed, double amp = 0.3) {
  vpure::Rng rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<double> x(n);
  for (auto& v : x) v = u(rng);
  return vpure::audio::Waveform(std::move(x));
}

inline vpure::audio::Waveform sine(std::size_t n, double freq, double amp, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / 16000.0 + phase);
  }
  return vpure::audio::Waveform(std::move(x));
}

template <class F>
vpure::ErrorKind error_kind(F&& f) {
  try {
    f();
  } catch (const vpure::Error& e) {
    return e.kind();
  }
  FAIL("expected a vpure::Error");
  return vpure::ErrorKind::kIo;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vpure_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
