#pragma once

// Reverse-mode differentiation over whole arrays. A DiffGraph records one
// node per primitive op in construction order, so the node list is already
// topologically sorted and backward() is a single reverse sweep.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "mixsynth/tensor.hpp"

namespace mixsynth::ad {

class DiffGraph;

/// Handle to a node of a DiffGraph. Cheap to copy; valid while the graph lives.
class DiffValue {
 public:
  DiffValue() = default;

  const Tensor& data() const;
  /// dLoss/dValue after DiffGraph::backward; zeros before.
  const Tensor& grad() const;
  const Tensor::Shape& shape() const { return data().shape(); }
  std::size_t size() const { return data().size(); }
  /// Value of a one-element node.
  double item() const;

  std::size_t id() const noexcept { return id_; }
  DiffGraph* graph() const noexcept { return graph_; }
  bool valid() const noexcept { return graph_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class DiffGraph;
  DiffValue(DiffGraph* graph, std::size_t id) : graph_(graph), id_(id) {}

  DiffGraph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives dLoss/dOutput and accumulates into the operand gradients.
/// Entries of `input_grads` are null for operands that need no gradient.
using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> input_grads)>;

class DiffGraph {
 public:
  DiffGraph() = default;
  DiffGraph(const DiffGraph&) = delete;
  DiffGraph& operator=(const DiffGraph&) = delete;

  /// Leaf excluded from differentiation.
  DiffValue constant(Tensor value);
  /// Leaf whose gradient is wanted.
  DiffValue variable(Tensor value);

  /// Appends an op node. `backward` may be empty when no operand needs a gradient.
  DiffValue record(std::string_view kind, std::span<const DiffValue> inputs, Tensor output,
                   BackwardFn backward);
  DiffValue record(std::string_view kind, std::initializer_list<DiffValue> inputs, Tensor output,
                   BackwardFn backward) {
    return record(kind, std::span<const DiffValue>(inputs.begin(), inputs.size()), std::move(output),
                  std::move(backward));
  }

  /// Populates grad() of every node reachable backwards from `loss`.
  /// Throws ShapeError unless `loss` holds exactly one element.
  void backward(const DiffValue& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view kind(std::size_t id) const { return nodes_.at(id).kind; }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

 private:
  struct Node {
    std::string_view kind;
    Tensor value;
    mutable Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // deque keeps node references stable while recording
};

/// Builds a scalar graph from a variable holding `point`.
using GraphBuilder = std::function<DiffValue(DiffGraph&, DiffValue)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  Tensor analytic;
  Tensor numeric;
};

/// Compares backward() with central differences at every coordinate.
/// Relative error per coordinate is |analytic - numeric| / (|numeric| + 1e-9).
GradCheckReport grad_check_report(const GraphBuilder& f, const Tensor& point, double step = 1e-5);
double grad_check(const GraphBuilder& f, const Tensor& point, double step = 1e-5);

}  // namespace mixsynth::ad
