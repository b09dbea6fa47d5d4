#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dlpo/autograd.hpp"
#include "dlpo/diffusion.hpp"

namespace dlpo {

struct DenoiserDims {
  std::size_t n = 128;     // waveform length
  std::size_t k = 8;       // condition classes
  std::size_t steps = 10;  // diffusion steps T
  std::size_t d_c = 16;    // condition embedding width
  std::size_t d_t = 16;    // timestep embedding width
  std::size_t h1 = 256;
  std::size_t h2 = 256;

  bool operator==(const DenoiserDims&) const = default;
};

// Offsets into the flat parameter vector, in storage order. Weight blocks are
// row-major (rows = outputs). Embedding tables are stored transposed
// (d x classes) so that a lookup is a product with a one-hot vector; column c
// of emb_c is the embedding of class c.
// Below std ~3 on the condition embedding, pretraining converges to a
// class-blind model.
inline constexpr double kCondEmbStd = 10.0;
inline constexpr double kStepEmbStd = 1.0;

struct DenoiserLayout {
  std::size_t emb_c = 0;  // d_c x k
  std::size_t emb_t = 0;  // d_t x steps
  std::size_t w1x = 0;    // h1 x n
  std::size_t w1c = 0;    // h1 x d_c
  std::size_t w1t = 0;    // h1 x d_t
  std::size_t b1 = 0;     // h1
  std::size_t w2 = 0;     // h2 x h1
  std::size_t b2 = 0;     // h2
  std::size_t w3 = 0;     // n x h2
  std::size_t b3 = 0;     // n
  std::size_t total = 0;

  static DenoiserLayout from(const DenoiserDims& d);
};

// Conditional noise predictor eps_theta(x_t, c, t):
//   h1 = tanh(W1x x_t + W1c emb_c[c] + W1t emb_t[t] + b1)
//   h2 = tanh(W2 h1 + b2)
//   eps = W3 h2 + b3
class Denoiser {
 public:
  explicit Denoiser(const DenoiserDims& dims);

  const DenoiserDims& dims() const { return dims_; }
  const DenoiserLayout& layout() const { return layout_; }
  std::size_t param_count() const { return layout_.total; }

  // Weights and biases uniform in +-1/sqrt(fan_in). Condition embeddings are
  // N(0, kCondEmbStd^2) and timestep embeddings N(0, kStepEmbStd^2).
  std::vector<double> init(std::uint64_t seed) const;

  std::vector<double> predict_eps(std::span<const double> params,
                                  std::span<const double> x_t, int c,
                                  int t) const;
  void predict_eps_into(std::span<const double> params,
                        std::span<const double> x_t, int c, int t,
                        std::span<double> out) const;

  // Appends the network to `tape`. x has length n, onehot_c length k,
  // onehot_t length steps; the returned node has length n.
  ad::Var build(ad::Tape& tape, ad::Var x, ad::Var onehot_c,
                ad::Var onehot_t) const;

  // Writes one-hot encodings of c and t (1-based) into `dst`, which must have
  // room for k + steps values.
  void write_onehots(int c, int t, std::span<double> dst) const;

  void check_args(std::size_t x_len, int c, int t) const;

 private:
  DenoiserDims dims_;
  DenoiserLayout layout_;
};

// Reverse-process mean from a noise prediction:
// mu = (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)
std::vector<double> mu_from_eps(std::span<const double> x_t,
                                std::span<const double> eps_hat, int t,
                                const Schedule& s);

// Coefficients (scale, eps_scale) with mu = scale * x_t - eps_scale * eps_hat.
struct MuCoefficients {
  double scale;
  double eps_scale;
};
MuCoefficients mu_coefficients(int t, const Schedule& s);

}  // namespace dlpo
