#include "dlpo/ddpm_loss.hpp"

#include <string>

#include "dlpo/errors.hpp"
#include "dlpo/parallel.hpp"

namespace dlpo {

LossNorm parse_loss_norm(std::string_view text) {
  if (text == "l2") return LossNorm::kL2;
  if (text == "l2sq") return LossNorm::kL2Squared;
  throw ConfigError("loss_norm must be l2 or l2sq, got '" + std::string(text) +
                    "'");
}

std::string_view to_string(LossNorm norm) {
  return norm == LossNorm::kL2 ? "l2" : "l2sq";
}

ad::Var residual_norm(ad::Tape& tape, ad::Var a, ad::Var b, LossNorm norm) {
  const ad::Var sq = tape.sum(tape.square(tape.sub(a, b)));
  return norm == LossNorm::kL2 ? tape.sqrt(sq) : sq;
}

std::vector<NoiseDraw> draw_noise(std::size_t count, std::size_t n, int steps,
                                  Rng& rng) {
  std::vector<NoiseDraw> draws(count);
  for (auto& d : draws) {
    d.t = rng.uniform_int(1, steps);
    d.eps.resize(n);
    for (auto& e : d.eps) e = rng.normal();
  }
  return draws;
}

LossAndGrad ddpm_loss(const Denoiser& net, std::span<const double> params,
                      std::span<const LabeledWave> batch,
                      std::span<const NoiseDraw> draws, const Schedule& sched,
                      LossNorm norm) {
  if (batch.empty()) throw ArgumentError("ddpm_loss: empty batch");
  if (draws.size() != batch.size()) {
    throw ArgumentError("ddpm_loss: need one noise draw per batch element");
  }
  const DenoiserDims& d = net.dims();
  if (static_cast<std::size_t>(sched.steps) != d.steps) {
    throw ArgumentError("ddpm_loss: schedule and denoiser disagree on steps");
  }

  // Inputs: x_t | one-hot(c) | one-hot(t) | eps
  const std::size_t n = d.n;
  const std::size_t oh = d.k + d.steps;
  const std::size_t input_len = n + oh + n;
  ad::Tape proto(net.param_count(), input_len);
  const ad::Var x = proto.input(0, n);
  const ad::Var c = proto.input(n, d.k);
  const ad::Var t = proto.input(n + d.k, d.steps);
  const ad::Var eps = proto.input(n + oh, n);
  proto.set_output(residual_norm(proto, eps, net.build(proto, x, c, t), norm));

  std::vector<ad::Tape> tapes(worker_count(), proto);
  std::vector<std::vector<double>> inputs(tapes.size(),
                                          std::vector<double>(input_len));
  std::vector<double> values(batch.size());
  const double weight = 1.0 / static_cast<double>(batch.size());

  LossAndGrad out;
  out.grad.assign(net.param_count(), 0.0);
  reduce_blocks(batch.size(), out.grad,
                [&](std::size_t i, std::size_t worker, std::span<double> acc) {
                  const LabeledWave& item = batch[i];
                  const NoiseDraw& draw = draws[i];
                  net.check_args(item.x0.size(), item.c, draw.t);
                  std::vector<double>& in = inputs[worker];
                  const std::vector<double> xt =
                      q_sample(item.x0, draw.t, draw.eps, sched);
                  std::copy(xt.begin(), xt.end(), in.begin());
                  net.write_onehots(item.c, draw.t,
                                    std::span<double>(in).subspan(n, oh));
                  std::copy(draw.eps.begin(), draw.eps.end(),
                            in.begin() + static_cast<std::ptrdiff_t>(n + oh));
                  ad::Tape& tape = tapes[worker];
                  values[i] = tape.forward(params, in);
                  tape.backward_into(acc, weight);
                });

  double total = 0.0;
  for (const double v : values) total += v;
  out.value = total * weight;
  return out;
}

LossAndGrad ddpm_loss(const Denoiser& net, std::span<const double> params,
                      std::span<const LabeledWave> batch, Rng& rng,
                      const Schedule& sched, LossNorm norm) {
  if (batch.empty()) throw ArgumentError("ddpm_loss: empty batch");
  const auto draws =
      draw_noise(batch.size(), net.dims().n, sched.steps, rng);
  return ddpm_loss(net, params, batch, draws, sched, norm);
}

}  // namespace dlpo
