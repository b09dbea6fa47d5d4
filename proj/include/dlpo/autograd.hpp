#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace dlpo::ad {

// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = 0;
};

enum class Op : std::uint8_t {
  kParam,   // slice of the parameter vector
  kInput,   // slice of the input vector
  kAdd,
  kSub,
  kMul,     // elementwise; a length-1 operand broadcasts
  kScale,   // multiply by a constant fixed at construction
  kMatVec,  // W x with W a row-major block of the parameter vector
  kTanh,
  kSum,
  kSquare,
  kSqrt,    // derivative at 0 is taken as 0
  kLog,
};

// A recorded program of vector-valued primitives over a flat parameter vector
// and a flat input vector. The graph is built once, then evaluated with
// forward() for any number of (params, inputs) pairs; backward() yields the
// gradient of the output node with respect to the parameters.
//
// Nodes are appended in construction order, which is a topological order.
// A tape is a single-threaded object; copy it to evaluate on another thread.
class Tape {
 public:
  Tape(std::size_t param_count, std::size_t input_count);

  Var param(std::size_t offset, std::size_t size);
  Var input(std::size_t offset, std::size_t size);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var matvec(std::size_t weight_offset, std::size_t rows, std::size_t cols,
             Var x);
  Var tanh(Var a);
  Var sum(Var a);
  Var square(Var a);
  Var sqrt(Var a);
  Var log(Var a);

  // Output defaults to the most recently added node.
  void set_output(Var v);
  Var output() const { return Var{output_}; }

  // Evaluates every node. `params` must stay alive until backward() returns.
  double forward(std::span<const double> params,
                 std::span<const double> inputs);

  std::vector<double> backward();
  // Adds weight * d(output)/d(params) into grad.
  void backward_into(std::span<double> grad, double weight = 1.0);

  std::span<const double> value(Var v) const;
  std::span<const double> adjoint(Var v) const;
  std::size_t size(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t param_count() const { return param_count_; }
  std::size_t input_count() const { return input_count_; }

 private:
  struct Node {
    Op op;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::size_t offset = 0;  // param/input offset or weight offset
    std::size_t rows = 0;
    std::size_t cols = 0;
    double factor = 0.0;
    std::size_t slot = 0;  // start of this node's value in values_
    std::size_t size = 0;
  };

  enum class Stage : std::uint8_t { kBuilt, kForwarded, kDone };

  Var push(Node node);
  const Node& node(Var v) const;
  void mark_reachable();

  std::size_t param_count_;
  std::size_t input_count_;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
  std::vector<std::uint8_t> reachable_;
  std::uint32_t output_ = 0;
  bool output_set_ = false;
  const double* params_ = nullptr;
  Stage stage_ = Stage::kBuilt;
};

// Objective for gradient checking: returns f(params) and, when `grad` is
// non-empty, writes the analytic gradient into it.
using Objective =
    std::function<double(std::span<const double> params, std::span<double> grad)>;

// Largest relative discrepancy between the analytic gradient and fourth-order
// central differences (stencil +-step, +-2 step), |g - c| / max(1e-12, |g| + |c|),
// over the given coordinates (all coordinates when `coords` is empty).
double finite_diff_check(const Objective& objective,
                         std::span<const double> params, double step,
                         std::span<const std::size_t> coords = {});

}  // namespace dlpo::ad
