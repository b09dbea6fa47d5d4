#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dlpo/ddpm_loss.hpp"
#include "dlpo/rng.hpp"

namespace dlpo {

// Condition classes for the toy task: class c is a sine with freq[c] cycles
// per window of n samples. Conditions are drawn uniformly.
struct ConditionSpec {
  std::size_t n = 128;
  std::vector<int> freq{2, 3, 4, 5, 6, 7, 8, 9};
  double amplitude = 1.0;
  double obs_noise = 0.01;

  std::size_t k() const { return freq.size(); }
  // Frequencies 2..k+1.
  static ConditionSpec with_classes(std::size_t n, std::size_t k);
  // Throws ConfigError unless frequencies are distinct, positive and < n/2.
  void validate() const;
};

// Feature weights of the two quality proxies. The defaults are experiment
// constants; the reward must stay stationary during fine-tuning.
struct RewardWeights {
  double spectral = 0.6;
  double smooth = 0.2;
  double amp = 0.2;
  double autocorr = 0.7;
  double crest = 0.3;
};

// amplitude * sin(2 pi freq[c] n / N + phase), no observation noise.
std::vector<double> clean_waveform(const ConditionSpec& spec, int c,
                                   double phase);

// `count` items with uniform class, uniform phase and N(0, obs_noise^2) noise.
std::vector<LabeledWave> make_dataset(const ConditionSpec& spec,
                                      std::size_t count, Rng& rng);

// |X_k|^2 for k = 0..n-1 (plain DFT).
std::vector<double> power_spectrum(std::span<const double> x);

// Naturalness proxy on the 1..5 scale:
// 1 + 4 clamp(w_spec S_spec + w_smooth S_smooth + w_amp S_amp, 0, 1).
double reward_mos(std::span<const double> x0, int c, const ConditionSpec& spec,
                  const RewardWeights& w = {});

// Held-out proxy on the same scale built from different features: sharpness
// of the circular autocorrelation at the class period, and closeness of the
// crest factor to that of a sine. Invariant to circular shifts.
double reward_heldout(std::span<const double> x0, int c,
                      const ConditionSpec& spec, const RewardWeights& w = {});

// Class whose frequency bin carries the most energy; ties go to the lower
// class index (so an all-zero input maps to class 0).
int condition_recovery(std::span<const double> x0, const ConditionSpec& spec);

// Individual features, exposed for tests and diagnostics.
struct MosFeatures {
  double spectral = 0.0;
  double smooth = 0.0;
  double amp = 0.0;
};
MosFeatures mos_features(std::span<const double> x0, int c,
                         const ConditionSpec& spec);

struct HeldoutFeatures {
  double autocorr = 0.0;
  double crest = 0.0;
};
HeldoutFeatures heldout_features(std::span<const double> x0, int c,
                                 const ConditionSpec& spec);

}  // namespace dlpo
