// Copyright 2026 The pttkit authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace pttkit {

//=========================================================================
// Deterministic counter-splittable RNG (splitmix64 core).  Streams are
// derived from (seed, tag, index...) so parallel generation is
// reproducible regardless of scheduling; samplers avoid std::
// distributions to keep sequences identical across toolchains.
//=========================================================================

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  return splitmix64(s);
}
inline std::uint64_t hash_str(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}
}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0x5851f42d4c957f2dull) {
    // warm up so nearby seeds decorrelate
    detail::splitmix64(state_);
    detail::splitmix64(state_);
  }

  // Derived independent stream for (purpose tag, indices...).
  Rng stream(const std::string& tag, std::uint64_t i = 0, std::uint64_t j = 0) const {
    std::uint64_t s = detail::mix(state_, detail::hash_str(tag));
    s = detail::mix(s, i + 1);
    s = detail::mix(s, j + 1);
    return Rng(s);
  }

  std::uint64_t next_u64() { return detail::splitmix64(state_); }

  double uniform() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  std::complex<double> cgaussian(double sigma = 1.0) {
    return {sigma * gaussian(), sigma * gaussian()};
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

//-------------------------------------------------------------------------
// Multinomial sampling: counts over outcomes, sum == shots.
//-------------------------------------------------------------------------

inline std::vector<std::uint64_t> multinomial_sample(const std::vector<double>& p,
                                                     std::uint64_t shots, Rng rng) {
  double total = 0;
  std::vector<double> q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < -1e-12) throw std::invalid_argument("multinomial_sample: negative probability");
    q[i] = std::max(0.0, p[i]);
    total += q[i];
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("multinomial_sample: probabilities must sum to 1");
  std::vector<std::uint64_t> counts(p.size(), 0);
  for (std::uint64_t s = 0; s < shots; ++s) {
    double u = rng.uniform() * total;
    std::size_t k = 0;
    for (; k + 1 < q.size(); ++k) {
      if (u < q[k]) break;
      u -= q[k];
    }
    ++counts[k];
  }
  return counts;
}

//-------------------------------------------------------------------------
// 1/f^alpha noise: frequency-domain shaping of white complex Gaussians,
// amplitudes scaled by f^(-alpha/2) inside [f_lo, f_hi] (clamped outside),
// inverse transformed, standardised to zero mean / unit variance.
//-------------------------------------------------------------------------

namespace detail {
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: length must be a power of 2");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}
}  // namespace detail

struct OneOverFConfig {
  double alpha = 1.0;
  double f_lo = 0.0;   // 0: defaults to 1/n
  double f_hi = 0.5;   // Nyquist in sample^-1 units
};

// Stationary zero-mean unit-variance sequence with S(f) ~ f^-alpha in band.
inline std::vector<double> sample_one_over_f(double alpha, std::size_t n_samples,
                                             const OneOverFConfig& cfg, Rng rng) {
  if (alpha < 0) throw std::invalid_argument("sample_one_over_f: alpha must be >= 0");
  if (n_samples == 0) return {};
  std::size_t n = 1;
  while (n < std::max<std::size_t>(n_samples, 2)) n <<= 1;
  const double f_lo = cfg.f_lo > 0 ? cfg.f_lo : 1.0 / static_cast<double>(n);
  const double f_hi = cfg.f_hi;

  std::vector<std::complex<double>> spec(n, {0.0, 0.0});
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) / static_cast<double>(n);
    const double fc = std::min(std::max(f, f_lo), f_hi);
    const double amp = std::pow(fc, -alpha / 2.0);
    const std::complex<double> g = rng.cgaussian(M_SQRT1_2);
    spec[k] = amp * g;
    if (k < n / 2) spec[n - k] = std::conj(spec[k]);
  }
  spec[0] = 0.0;  // zero mean
  if (n / 2 < n) spec[n / 2] = std::real(spec[n / 2]);
  detail::fft_inplace(spec, true);

  // standardise over the returned window
  std::vector<double> out(n_samples);
  double mean = 0, var = 0;
  for (std::size_t i = 0; i < n_samples; ++i) mean += spec[i].real();
  mean /= static_cast<double>(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double d = spec[i].real() - mean;
    var += d * d;
  }
  var /= static_cast<double>(n_samples);
  const double scale = var > 0 ? 1.0 / std::sqrt(var) : 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) out[i] = (spec[i].real() - mean) * scale;
  return out;
}

inline std::vector<double> sample_one_over_f(double alpha, std::size_t n_samples,
                                             std::uint64_t seed) {
  return sample_one_over_f(alpha, n_samples, OneOverFConfig{alpha}, Rng(seed));
}

}  // namespace pttkit
