#include "dlpo/denoiser.hpp"

#include <cmath>
#include <string>

#include "dlpo/errors.hpp"
#include "dlpo/kernels.hpp"
#include "dlpo/rng.hpp"

namespace dlpo {

DenoiserLayout DenoiserLayout::from(const DenoiserDims& d) {
  DenoiserLayout l;
  std::size_t at = 0;
  auto take = [&at](std::size_t count) {
    const std::size_t start = at;
    at += count;
    return start;
  };
  l.emb_c = take(d.d_c * d.k);
  l.emb_t = take(d.d_t * d.steps);
  l.w1x = take(d.h1 * d.n);
  l.w1c = take(d.h1 * d.d_c);
  l.w1t = take(d.h1 * d.d_t);
  l.b1 = take(d.h1);
  l.w2 = take(d.h2 * d.h1);
  l.b2 = take(d.h2);
  l.w3 = take(d.n * d.h2);
  l.b3 = take(d.n);
  l.total = at;
  return l;
}

Denoiser::Denoiser(const DenoiserDims& dims)
    : dims_(dims), layout_(DenoiserLayout::from(dims)) {
  if (dims.n == 0 || dims.k == 0 || dims.steps == 0 || dims.d_c == 0 ||
      dims.d_t == 0 || dims.h1 == 0 || dims.h2 == 0) {
    throw ConfigError("denoiser: all dimensions must be positive");
  }
}

std::vector<double> Denoiser::init(std::uint64_t seed) const {
  std::vector<double> theta(layout_.total, 0.0);
  Rng rng(seed);
  auto uniform_block = [&](std::size_t offset, std::size_t count,
                           std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) {
      theta[offset + i] = bound * (2.0 * rng.uniform() - 1.0);
    }
  };
  const DenoiserDims& d = dims_;
  for (std::size_t i = 0; i < d.d_c * d.k; ++i) {
    theta[layout_.emb_c + i] = kCondEmbStd * rng.normal();
  }
  for (std::size_t i = 0; i < d.d_t * d.steps; ++i) {
    theta[layout_.emb_t + i] = kStepEmbStd * rng.normal();
  }
  const std::size_t fan1 = d.n + d.d_c + d.d_t;
  uniform_block(layout_.w1x, d.h1 * d.n, fan1);
  uniform_block(layout_.w1c, d.h1 * d.d_c, fan1);
  uniform_block(layout_.w1t, d.h1 * d.d_t, fan1);
  uniform_block(layout_.b1, d.h1, fan1);
  uniform_block(layout_.w2, d.h2 * d.h1, d.h1);
  uniform_block(layout_.b2, d.h2, d.h1);
  uniform_block(layout_.w3, d.n * d.h2, d.h2);
  uniform_block(layout_.b3, d.n, d.h2);
  return theta;
}

void Denoiser::check_args(std::size_t x_len, int c, int t) const {
  if (x_len != dims_.n) {
    throw ArgumentError("denoiser: x_t has length " + std::to_string(x_len) +
                        ", expected " + std::to_string(dims_.n));
  }
  if (c < 0 || static_cast<std::size_t>(c) >= dims_.k) {
    throw ArgumentError("denoiser: condition " + std::to_string(c) +
                        " outside 0.." + std::to_string(dims_.k - 1));
  }
  if (t < 1 || static_cast<std::size_t>(t) > dims_.steps) {
    throw ArgumentError("denoiser: step " + std::to_string(t) + " outside 1.." +
                        std::to_string(dims_.steps));
  }
}

std::vector<double> Denoiser::predict_eps(std::span<const double> params,
                                          std::span<const double> x_t, int c,
                                          int t) const {
  std::vector<double> out(dims_.n);
  predict_eps_into(params, x_t, c, t, out);
  return out;
}

// Mirrors build() operation for operation so that both paths produce the same
// bits: the embedding lookup is the one-hot product (which reduces exactly to
// a column read) and the first-layer sum is ((Wx x + Wc e_c) + Wt e_t) + b1.
void Denoiser::predict_eps_into(std::span<const double> params,
                                std::span<const double> x_t, int c, int t,
                                std::span<double> out) const {
  check_args(x_t.size(), c, t);
  if (params.size() != layout_.total) {
    throw ArgumentError("denoiser: expected " + std::to_string(layout_.total) +
                        " params, got " + std::to_string(params.size()));
  }
  if (out.size() != dims_.n) throw ArgumentError("denoiser: bad output length");
  const DenoiserDims& d = dims_;
  const double* p = params.data();

  thread_local std::vector<double> scratch;
  const std::size_t need = d.d_c + d.d_t + 4 * d.h1 + d.h2;
  if (scratch.size() < need) scratch.resize(need);
  double* ec = scratch.data();
  double* et = ec + d.d_c;
  double* a = et + d.d_t;
  double* b = a + d.h1;
  double* cc = b + d.h1;
  double* h1 = cc + d.h1;
  double* h2 = h1 + d.h1;

  for (std::size_t r = 0; r < d.d_c; ++r) ec[r] = p[layout_.emb_c + r * d.k + c];
  for (std::size_t r = 0; r < d.d_t; ++r) {
    et[r] = p[layout_.emb_t + r * d.steps + static_cast<std::size_t>(t - 1)];
  }
  kernels::matvec(p + layout_.w1x, d.h1, d.n, x_t.data(), a);
  kernels::matvec(p + layout_.w1c, d.h1, d.d_c, ec, b);
  kernels::matvec(p + layout_.w1t, d.h1, d.d_t, et, cc);
  for (std::size_t r = 0; r < d.h1; ++r) {
    h1[r] = std::tanh(((a[r] + b[r]) + cc[r]) + p[layout_.b1 + r]);
  }
  kernels::matvec(p + layout_.w2, d.h2, d.h1, h1, a);
  for (std::size_t r = 0; r < d.h2; ++r) {
    h2[r] = std::tanh(a[r] + p[layout_.b2 + r]);
  }
  kernels::matvec(p + layout_.w3, d.n, d.h2, h2, a);
  for (std::size_t r = 0; r < d.n; ++r) out[r] = a[r] + p[layout_.b3 + r];
}

ad::Var Denoiser::build(ad::Tape& tape, ad::Var x, ad::Var onehot_c,
                        ad::Var onehot_t) const {
  const DenoiserDims& d = dims_;
  const DenoiserLayout& l = layout_;
  const ad::Var ec = tape.matvec(l.emb_c, d.d_c, d.k, onehot_c);
  const ad::Var et = tape.matvec(l.emb_t, d.d_t, d.steps, onehot_t);
  ad::Var pre = tape.add(tape.matvec(l.w1x, d.h1, d.n, x),
                         tape.matvec(l.w1c, d.h1, d.d_c, ec));
  pre = tape.add(pre, tape.matvec(l.w1t, d.h1, d.d_t, et));
  pre = tape.add(pre, tape.param(l.b1, d.h1));
  const ad::Var h1 = tape.tanh(pre);
  const ad::Var h2 = tape.tanh(
      tape.add(tape.matvec(l.w2, d.h2, d.h1, h1), tape.param(l.b2, d.h2)));
  return tape.add(tape.matvec(l.w3, d.n, d.h2, h2), tape.param(l.b3, d.n));
}

void Denoiser::write_onehots(int c, int t, std::span<double> dst) const {
  if (dst.size() < dims_.k + dims_.steps) {
    throw ArgumentError("denoiser: one-hot buffer too small");
  }
  std::fill(dst.begin(), dst.begin() + static_cast<std::ptrdiff_t>(dims_.k + dims_.steps), 0.0);
  dst[static_cast<std::size_t>(c)] = 1.0;
  dst[dims_.k + static_cast<std::size_t>(t - 1)] = 1.0;
}

MuCoefficients mu_coefficients(int t, const Schedule& s) {
  const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_at(t));
  const double eps_coeff = s.beta_at(t) / std::sqrt(1.0 - s.alpha_bar_at(t));
  return {inv_sqrt_alpha, inv_sqrt_alpha * eps_coeff};
}

std::vector<double> mu_from_eps(std::span<const double> x_t,
                                std::span<const double> eps_hat, int t,
                                const Schedule& s) {
  if (x_t.size() != eps_hat.size()) {
    throw ArgumentError("mu_from_eps: length mismatch");
  }
  const MuCoefficients k = mu_coefficients(t, s);
  std::vector<double> mu(x_t.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    mu[i] = k.scale * x_t[i] - k.eps_scale * eps_hat[i];
  }
  return mu;
}

}  // namespace dlpo
