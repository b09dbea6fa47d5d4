#include "dlpo/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "dlpo/errors.hpp"

namespace dlpo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double to_scale(double score) { return 1.0 + 4.0 * clamp01(score); }

void check_class(int c, const ConditionSpec& spec) {
  if (c < 0 || static_cast<std::size_t>(c) >= spec.k()) {
    throw ArgumentError("condition " + std::to_string(c) + " outside 0.." +
                        std::to_string(spec.k() - 1));
  }
}

// Twiddle tables cached per length; the proxies call this on every sample.
const std::vector<double>& cos_table(std::size_t n) {
  thread_local std::size_t cached_n = 0;
  thread_local std::vector<double> table;
  if (cached_n != n) {
    table.resize(2 * n);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = kTwoPi * static_cast<double>(j) / static_cast<double>(n);
      table[2 * j] = std::cos(a);
      table[2 * j + 1] = std::sin(a);
    }
    cached_n = n;
  }
  return table;
}

}  // namespace

ConditionSpec ConditionSpec::with_classes(std::size_t n, std::size_t k) {
  ConditionSpec spec;
  spec.n = n;
  spec.freq.resize(k);
  for (std::size_t c = 0; c < k; ++c) spec.freq[c] = static_cast<int>(c) + 2;
  return spec;
}

void ConditionSpec::validate() const {
  if (freq.empty()) throw ConfigError("conditions: need at least one class");
  std::set<int> seen;
  for (const int f : freq) {
    if (f <= 0 || 2 * static_cast<std::size_t>(f) >= n) {
      throw ConfigError("conditions: frequency " + std::to_string(f) +
                        " is not resolvable with n = " + std::to_string(n));
    }
    if (!seen.insert(f).second) {
      throw ConfigError("conditions: frequency " + std::to_string(f) +
                        " repeated");
    }
  }
  if (!(amplitude > 0.0)) throw ConfigError("conditions: amplitude must be > 0");
  if (!(obs_noise >= 0.0)) throw ConfigError("conditions: obs_noise must be >= 0");
}

std::vector<double> clean_waveform(const ConditionSpec& spec, int c,
                                   double phase) {
  check_class(c, spec);
  std::vector<double> x(spec.n);
  const double f = spec.freq[static_cast<std::size_t>(c)];
  for (std::size_t i = 0; i < spec.n; ++i) {
    x[i] = spec.amplitude *
           std::sin(kTwoPi * f * static_cast<double>(i) /
                        static_cast<double>(spec.n) +
                    phase);
  }
  return x;
}

std::vector<LabeledWave> make_dataset(const ConditionSpec& spec,
                                      std::size_t count, Rng& rng) {
  if (count == 0) throw ArgumentError("make_dataset: count must be >= 1");
  spec.validate();
  std::vector<LabeledWave> out(count);
  const int k = static_cast<int>(spec.k());
  for (auto& item : out) {
    item.c = rng.uniform_int(0, k - 1);
    const double phase = kTwoPi * rng.uniform();
    item.x0 = clean_waveform(spec, item.c, phase);
    for (auto& v : item.x0) v += spec.obs_noise * rng.normal();
  }
  return out;
}

std::vector<double> power_spectrum(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> p(n, 0.0);
  if (n == 0) return p;
  const std::vector<double>& tw = cos_table(n);
  for (std::size_t k = 0; k < n; ++k) {
    double re = 0.0;
    double im = 0.0;
    std::size_t idx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      re += x[j] * tw[2 * idx];
      im -= x[j] * tw[2 * idx + 1];
      idx += k;
      if (idx >= n) idx -= n;
    }
    p[k] = re * re + im * im;
  }
  return p;
}

MosFeatures mos_features(std::span<const double> x0, int c,
                         const ConditionSpec& spec) {
  check_class(c, spec);
  if (x0.size() != spec.n) throw ArgumentError("reward: waveform has wrong length");
  const std::size_t n = x0.size();
  MosFeatures f;

  // Spectral energy fraction in the class bin +-1 over bins 0..n/2-1.
  const std::vector<double> p = power_spectrum(x0);
  const std::size_t half = n / 2;
  double total = 0.0;
  for (std::size_t k = 0; k < half; ++k) total += p[k];
  if (total > 0.0) {
    const auto bin = static_cast<std::size_t>(spec.freq[static_cast<std::size_t>(c)]);
    double in_band = 0.0;
    for (std::size_t k = bin - 1; k <= bin + 1 && k < half; ++k) in_band += p[k];
    f.spectral = in_band / total;
  }

  double d2 = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double d = x0[i + 1] - 2.0 * x0[i] + x0[i - 1];
    d2 += d * d;
  }
  const double mean_d2 = n > 2 ? d2 / static_cast<double>(n - 2) : 0.0;
  f.smooth = std::exp(-mean_d2 / 0.1);

  double sq = 0.0;
  for (const double v : x0) sq += v * v;
  const double rms = std::sqrt(sq / static_cast<double>(n));
  const double target = spec.amplitude / std::numbers::sqrt2;
  f.amp = std::exp(-(rms - target) * (rms - target) / 0.02);
  return f;
}

double reward_mos(std::span<const double> x0, int c, const ConditionSpec& spec,
                  const RewardWeights& w) {
  const MosFeatures f = mos_features(x0, c, spec);
  return to_scale(w.spectral * f.spectral + w.smooth * f.smooth + w.amp * f.amp);
}

HeldoutFeatures heldout_features(std::span<const double> x0, int c,
                                 const ConditionSpec& spec) {
  check_class(c, spec);
  if (x0.size() != spec.n) throw ArgumentError("reward: waveform has wrong length");
  const std::size_t n = x0.size();
  HeldoutFeatures f;

  const std::vector<double> p = power_spectrum(x0);
  double energy = 0.0;
  for (const double v : p) energy += v;
  if (!(energy > 0.0)) return f;

  // Normalized circular autocorrelation at a (possibly fractional) lag, via
  // the symmetric trigonometric interpolation of the power spectrum. At
  // integer lags this is exactly the circular autocorrelation.
  auto rho = [&](double lag) {
    double acc = p[0];
    const std::size_t half = n / 2;
    for (std::size_t k = 1; k < (n + 1) / 2; ++k) {
      acc += 2.0 * p[k] *
             std::cos(kTwoPi * static_cast<double>(k) * lag /
                      static_cast<double>(n));
    }
    if (n % 2 == 0) acc += p[half] * std::cos(std::numbers::pi * lag);
    return acc / energy;
  };
  const double period =
      static_cast<double>(n) / spec.freq[static_cast<std::size_t>(c)];
  f.autocorr = clamp01(0.5 * (rho(period) - rho(0.5 * period)));

  double sq = 0.0;
  double peak = 0.0;
  for (const double v : x0) {
    sq += v * v;
    peak = std::max(peak, std::abs(v));
  }
  const double rms = std::sqrt(sq / static_cast<double>(n));
  const double crest = peak / rms;
  const double dev = crest - std::numbers::sqrt2;
  f.crest = std::exp(-dev * dev / 0.5);
  return f;
}

double reward_heldout(std::span<const double> x0, int c,
                      const ConditionSpec& spec, const RewardWeights& w) {
  const HeldoutFeatures f = heldout_features(x0, c, spec);
  return to_scale(w.autocorr * f.autocorr + w.crest * f.crest);
}

int condition_recovery(std::span<const double> x0, const ConditionSpec& spec) {
  if (x0.size() != spec.n) throw ArgumentError("recovery: waveform has wrong length");
  const std::vector<double> p = power_spectrum(x0);
  int best = 0;
  double best_energy = p[static_cast<std::size_t>(spec.freq[0])];
  for (std::size_t c = 1; c < spec.k(); ++c) {
    const double e = p[static_cast<std::size_t>(spec.freq[c])];
    if (e > best_energy) {
      best = static_cast<int>(c);
      best_energy = e;
    }
  }
  return best;
}

}  // namespace dlpo
