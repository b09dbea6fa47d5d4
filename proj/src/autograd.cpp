#include "dlpo/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dlpo/errors.hpp"
#include "dlpo/kernels.hpp"

namespace dlpo::ad {

namespace {

const char* op_name(Op op) {
  switch (op) {
    case Op::kParam: return "param";
    case Op::kInput: return "input";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kMatVec: return "matvec";
    case Op::kTanh: return "tanh";
    case Op::kSum: return "sum";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kLog: return "log";
  }
  return "?";
}

}  // namespace

Tape::Tape(std::size_t param_count, std::size_t input_count)
    : param_count_(param_count), input_count_(input_count) {}

Var Tape::push(Node n) {
  n.slot = values_.size();
  values_.resize(values_.size() + n.size, 0.0);
  nodes_.push_back(n);
  stage_ = Stage::kBuilt;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw ConstructionError("tape: node " + std::to_string(v.id) +
                            " does not exist");
  }
  return nodes_[v.id];
}

Var Tape::param(std::size_t offset, std::size_t size) {
  if (size == 0 || offset + size > param_count_) {
    throw ConstructionError("tape: param slice [" + std::to_string(offset) +
                            ", +" + std::to_string(size) +
                            ") outside parameter vector of length " +
                            std::to_string(param_count_));
  }
  return push(Node{.op = Op::kParam, .offset = offset, .size = size});
}

Var Tape::input(std::size_t offset, std::size_t size) {
  if (size == 0 || offset + size > input_count_) {
    throw ConstructionError("tape: input slice [" + std::to_string(offset) +
                            ", +" + std::to_string(size) +
                            ") outside input vector of length " +
                            std::to_string(input_count_));
  }
  return push(Node{.op = Op::kInput, .offset = offset, .size = size});
}

Var Tape::add(Var a, Var b) {
  const std::size_t n = node(a).size;
  if (node(b).size != n) throw ConstructionError("tape: add size mismatch");
  return push(Node{.op = Op::kAdd, .a = a.id, .b = b.id, .size = n});
}

Var Tape::sub(Var a, Var b) {
  const std::size_t n = node(a).size;
  if (node(b).size != n) throw ConstructionError("tape: sub size mismatch");
  return push(Node{.op = Op::kSub, .a = a.id, .b = b.id, .size = n});
}

Var Tape::mul(Var a, Var b) {
  const std::size_t na = node(a).size;
  const std::size_t nb = node(b).size;
  if (na != nb && na != 1 && nb != 1) {
    throw ConstructionError("tape: mul size mismatch");
  }
  return push(
      Node{.op = Op::kMul, .a = a.id, .b = b.id, .size = std::max(na, nb)});
}

Var Tape::scale(Var a, double factor) {
  return push(Node{
      .op = Op::kScale, .a = a.id, .factor = factor, .size = node(a).size});
}

Var Tape::matvec(std::size_t weight_offset, std::size_t rows, std::size_t cols,
                 Var x) {
  if (node(x).size != cols) {
    throw ConstructionError("tape: matvec expects input of length " +
                            std::to_string(cols));
  }
  if (rows == 0 || weight_offset + rows * cols > param_count_) {
    throw ConstructionError("tape: matvec weight block outside parameters");
  }
  return push(Node{.op = Op::kMatVec,
                   .a = x.id,
                   .offset = weight_offset,
                   .rows = rows,
                   .cols = cols,
                   .size = rows});
}

Var Tape::tanh(Var a) {
  return push(Node{.op = Op::kTanh, .a = a.id, .size = node(a).size});
}

Var Tape::sum(Var a) {
  node(a);
  return push(Node{.op = Op::kSum, .a = a.id, .size = 1});
}

Var Tape::square(Var a) {
  return push(Node{.op = Op::kSquare, .a = a.id, .size = node(a).size});
}

Var Tape::sqrt(Var a) {
  return push(Node{.op = Op::kSqrt, .a = a.id, .size = node(a).size});
}

Var Tape::log(Var a) {
  return push(Node{.op = Op::kLog, .a = a.id, .size = node(a).size});
}

void Tape::set_output(Var v) {
  if (node(v).size != 1) {
    throw ConstructionError("tape: output node must be scalar");
  }
  output_ = v.id;
  output_set_ = true;
}

std::span<const double> Tape::value(Var v) const {
  const Node& n = node(v);
  return {values_.data() + n.slot, n.size};
}

std::span<const double> Tape::adjoint(Var v) const {
  const Node& n = node(v);
  if (adjoints_.size() != values_.size()) {
    throw StateError("tape: adjoints requested before backward");
  }
  return {adjoints_.data() + n.slot, n.size};
}

std::size_t Tape::size(Var v) const { return node(v).size; }

void Tape::mark_reachable() {
  reachable_.assign(nodes_.size(), 0);
  reachable_[output_] = 1;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (!reachable_[i]) continue;
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::kParam:
      case Op::kInput:
        break;
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
        reachable_[n.a] = 1;
        reachable_[n.b] = 1;
        break;
      default:
        reachable_[n.a] = 1;
        break;
    }
  }
}

double Tape::forward(std::span<const double> params,
                     std::span<const double> inputs) {
  if (nodes_.empty()) throw StateError("tape: forward on empty tape");
  if (params.size() != param_count_) {
    throw ArgumentError("tape: expected " + std::to_string(param_count_) +
                        " params, got " + std::to_string(params.size()));
  }
  if (inputs.size() != input_count_) {
    throw ArgumentError("tape: expected " + std::to_string(input_count_) +
                        " inputs, got " + std::to_string(inputs.size()));
  }
  if (!output_set_) output_ = static_cast<std::uint32_t>(nodes_.size() - 1);
  if (nodes_[output_].size != 1) {
    throw ConstructionError("tape: output node must be scalar");
  }

  double* v = values_.data();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    double* y = v + n.slot;
    const std::size_t sz = n.size;
    switch (n.op) {
      case Op::kParam:
        std::copy_n(params.data() + n.offset, sz, y);
        break;
      case Op::kInput:
        std::copy_n(inputs.data() + n.offset, sz, y);
        break;
      case Op::kAdd: {
        const double* a = v + nodes_[n.a].slot;
        const double* b = v + nodes_[n.b].slot;
        for (std::size_t j = 0; j < sz; ++j) y[j] = a[j] + b[j];
        break;
      }
      case Op::kSub: {
        const double* a = v + nodes_[n.a].slot;
        const double* b = v + nodes_[n.b].slot;
        for (std::size_t j = 0; j < sz; ++j) y[j] = a[j] - b[j];
        break;
      }
      case Op::kMul: {
        const Node& na = nodes_[n.a];
        const Node& nb = nodes_[n.b];
        const double* a = v + na.slot;
        const double* b = v + nb.slot;
        if (na.size == nb.size) {
          for (std::size_t j = 0; j < sz; ++j) y[j] = a[j] * b[j];
        } else if (na.size == 1) {
          for (std::size_t j = 0; j < sz; ++j) y[j] = a[0] * b[j];
        } else {
          for (std::size_t j = 0; j < sz; ++j) y[j] = a[j] * b[0];
        }
        break;
      }
      case Op::kScale: {
        const double* a = v + nodes_[n.a].slot;
        for (std::size_t j = 0; j < sz; ++j) y[j] = n.factor * a[j];
        break;
      }
      case Op::kMatVec: {
        kernels::matvec(params.data() + n.offset, n.rows, n.cols,
                        v + nodes_[n.a].slot, y);
        break;
      }
      case Op::kTanh: {
        const double* a = v + nodes_[n.a].slot;
        for (std::size_t j = 0; j < sz; ++j) y[j] = std::tanh(a[j]);
        break;
      }
      case Op::kSum: {
        const Node& na = nodes_[n.a];
        const double* a = v + na.slot;
        double acc = 0.0;
        for (std::size_t j = 0; j < na.size; ++j) acc += a[j];
        y[0] = acc;
        break;
      }
      case Op::kSquare: {
        const double* a = v + nodes_[n.a].slot;
        for (std::size_t j = 0; j < sz; ++j) y[j] = a[j] * a[j];
        break;
      }
      case Op::kSqrt: {
        const double* a = v + nodes_[n.a].slot;
        for (std::size_t j = 0; j < sz; ++j) y[j] = std::sqrt(a[j]);
        break;
      }
      case Op::kLog: {
        const double* a = v + nodes_[n.a].slot;
        for (std::size_t j = 0; j < sz; ++j) y[j] = std::log(a[j]);
        break;
      }
    }
    for (std::size_t j = 0; j < sz; ++j) {
      if (!std::isfinite(y[j])) {
        throw NumericError(std::string("tape: non-finite value at node ") +
                               std::to_string(i) + " (" + op_name(n.op) + ")",
                           i);
      }
    }
  }

  mark_reachable();
  params_ = params.data();
  stage_ = Stage::kForwarded;
  return v[nodes_[output_].slot];
}

std::vector<double> Tape::backward() {
  std::vector<double> grad(param_count_, 0.0);
  backward_into(grad, 1.0);
  return grad;
}

void Tape::backward_into(std::span<double> grad, double weight) {
  if (stage_ != Stage::kForwarded) {
    throw StateError(stage_ == Stage::kDone
                         ? "tape: backward called twice without forward"
                         : "tape: backward called before forward");
  }
  if (grad.size() != param_count_) {
    throw ArgumentError("tape: gradient buffer has wrong length");
  }
  stage_ = Stage::kDone;

  adjoints_.assign(values_.size(), 0.0);
  const double* v = values_.data();
  double* adj = adjoints_.data();
  adj[nodes_[output_].slot] = weight;

  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (!reachable_[i]) continue;
    const Node& n = nodes_[i];
    const double* gy = adj + n.slot;
    const double* y = v + n.slot;
    const std::size_t sz = n.size;
    switch (n.op) {
      case Op::kParam: {
        double* g = grad.data() + n.offset;
        for (std::size_t j = 0; j < sz; ++j) g[j] += gy[j];
        break;
      }
      case Op::kInput:
        break;
      case Op::kAdd: {
        double* ga = adj + nodes_[n.a].slot;
        double* gb = adj + nodes_[n.b].slot;
        for (std::size_t j = 0; j < sz; ++j) ga[j] += gy[j];
        for (std::size_t j = 0; j < sz; ++j) gb[j] += gy[j];
        break;
      }
      case Op::kSub: {
        double* ga = adj + nodes_[n.a].slot;
        double* gb = adj + nodes_[n.b].slot;
        for (std::size_t j = 0; j < sz; ++j) ga[j] += gy[j];
        for (std::size_t j = 0; j < sz; ++j) gb[j] -= gy[j];
        break;
      }
      case Op::kMul: {
        const Node& na = nodes_[n.a];
        const Node& nb = nodes_[n.b];
        const double* a = v + na.slot;
        const double* b = v + nb.slot;
        double* ga = adj + na.slot;
        double* gb = adj + nb.slot;
        if (na.size == nb.size) {
          for (std::size_t j = 0; j < sz; ++j) {
            ga[j] += gy[j] * b[j];
            gb[j] += gy[j] * a[j];
          }
        } else if (na.size == 1) {
          double acc = 0.0;
          for (std::size_t j = 0; j < sz; ++j) {
            acc += gy[j] * b[j];
            gb[j] += gy[j] * a[0];
          }
          ga[0] += acc;
        } else {
          double acc = 0.0;
          for (std::size_t j = 0; j < sz; ++j) {
            ga[j] += gy[j] * b[0];
            acc += gy[j] * a[j];
          }
          gb[0] += acc;
        }
        break;
      }
      case Op::kScale: {
        double* ga = adj + nodes_[n.a].slot;
        for (std::size_t j = 0; j < sz; ++j) ga[j] += n.factor * gy[j];
        break;
      }
      case Op::kMatVec: {
        const Node& nx = nodes_[n.a];
        const double* x = v + nx.slot;
        double* gx = adj + nx.slot;
        const double* w = params_ + n.offset;
        double* gw = grad.data() + n.offset;
        for (std::size_t r = 0; r < n.rows; ++r) {
          const double g = gy[r];
          const double* row = w + r * n.cols;
          double* grow = gw + r * n.cols;
          for (std::size_t c = 0; c < n.cols; ++c) {
            grow[c] += g * x[c];
            gx[c] += g * row[c];
          }
        }
        break;
      }
      case Op::kTanh: {
        double* ga = adj + nodes_[n.a].slot;
        for (std::size_t j = 0; j < sz; ++j) {
          ga[j] += gy[j] * (1.0 - y[j] * y[j]);
        }
        break;
      }
      case Op::kSum: {
        const Node& na = nodes_[n.a];
        double* ga = adj + na.slot;
        for (std::size_t j = 0; j < na.size; ++j) ga[j] += gy[0];
        break;
      }
      case Op::kSquare: {
        const double* a = v + nodes_[n.a].slot;
        double* ga = adj + nodes_[n.a].slot;
        for (std::size_t j = 0; j < sz; ++j) ga[j] += 2.0 * a[j] * gy[j];
        break;
      }
      case Op::kSqrt: {
        double* ga = adj + nodes_[n.a].slot;
        for (std::size_t j = 0; j < sz; ++j) {
          if (y[j] > 0.0) ga[j] += gy[j] * 0.5 / y[j];
        }
        break;
      }
      case Op::kLog: {
        const double* a = v + nodes_[n.a].slot;
        double* ga = adj + nodes_[n.a].slot;
        for (std::size_t j = 0; j < sz; ++j) ga[j] += gy[j] / a[j];
        break;
      }
    }
  }
}

double finite_diff_check(const Objective& objective,
                         std::span<const double> params, double step,
                         std::span<const std::size_t> coords) {
  if (!(step > 0.0)) throw ArgumentError("finite_diff_check: step must be > 0");
  std::vector<double> analytic(params.size(), 0.0);
  objective(params, analytic);

  std::vector<double> probe(params.begin(), params.end());
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(params.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    coords = all;
  }

  double worst = 0.0;
  for (const std::size_t i : coords) {
    if (i >= params.size()) {
      throw ArgumentError("finite_diff_check: coordinate out of range");
    }
    const double x = probe[i];
    const auto at = [&](double offset) {
      probe[i] = x + offset;
      const double v = objective(probe, {});
      if (!std::isfinite(v)) {
        throw NumericError("finite_diff_check: non-finite objective at coordinate " +
                           std::to_string(i));
      }
      return v;
    };
    // Paired differences keep the estimate exactly zero for unused coordinates.
    const double near = at(step) - at(-step);
    const double far = at(2.0 * step) - at(-2.0 * step);
    probe[i] = x;
    const double central = (8.0 * near - far) / (12.0 * step);
    const double denom =
        std::max(1e-12, std::abs(analytic[i]) + std::abs(central));
    worst = std::max(worst, std::abs(analytic[i] - central) / denom);
  }
  return worst;
}

}  // namespace dlpo::ad
