#include "mixsynth/autodiff.hpp"

#include <cmath>

#include "mixsynth/error.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace mixsynth::ad {

namespace {

#if defined(__GLIBC__)
// Graphs reallocate the same large tensors every iteration; serving them from
// the heap instead of fresh mmap pages avoids re-faulting zeroed memory.
const bool kHeapTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
  return true;
}();
#endif

}  // namespace

const Tensor& DiffValue::data() const { return graph_->value(id_); }
const Tensor& DiffValue::grad() const { return graph_->grad(id_); }
bool DiffValue::requires_grad() const { return graph_->requires_grad(id_); }

double DiffValue::item() const {
  const Tensor& v = data();
  if (v.size() != 1) throw ShapeError("item: value of shape " + shape_string(v.shape()) + " is not a scalar");
  return v[0];
}

DiffValue DiffGraph::constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, {}, false});
  return DiffValue(this, nodes_.size() - 1);
}

DiffValue DiffGraph::variable(Tensor value) {
  nodes_.push_back(Node{"variable", std::move(value), {}, {}, {}, true});
  return DiffValue(this, nodes_.size() - 1);
}

DiffValue DiffGraph::record(std::string_view kind, std::span<const DiffValue> inputs, Tensor output,
                            BackwardFn backward) {
  Node node;
  node.kind = kind;
  node.value = std::move(output);
  node.inputs.reserve(inputs.size());
  for (const DiffValue& in : inputs) {
    if (in.graph_ != this) throw ValidationError(std::string(kind) + ": operand belongs to another graph");
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return DiffValue(this, nodes_.size() - 1);
}

const Tensor& DiffGraph::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (!n.grad.same_shape(n.value) || n.grad.size() != n.value.size()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

void DiffGraph::backward(const DiffValue& loss) {
  if (loss.graph_ != this) throw ValidationError("backward: loss belongs to another graph");
  const Node& root = nodes_.at(loss.id_);
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(root.value.shape()));
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) {
      if (!n.grad.same_shape(n.value) || n.grad.size() != n.value.size()) n.grad = Tensor::zeros_like(n.value);
      else n.grad.fill(0.0);
    }
  }
  if (!root.requires_grad) return;
  root.grad[0] = 1.0;

  std::vector<Tensor*> operand_grads;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    operand_grads.clear();
    for (std::size_t in : n.inputs) {
      Node& operand = nodes_[in];
      operand_grads.push_back(operand.requires_grad ? &operand.grad : nullptr);
    }
    n.backward(n.grad, operand_grads);
  }
}

GradCheckReport grad_check_report(const GraphBuilder& f, const Tensor& point, double step) {
  GradCheckReport report;
  {
    DiffGraph g;
    DiffValue x = g.variable(point);
    DiffValue loss = f(g, x);
    g.backward(loss);
    report.analytic = x.grad();
  }
  auto eval = [&](const Tensor& p) {
    DiffGraph g;
    DiffValue x = g.constant(p);
    return f(g, x).item();
  };
  report.numeric = Tensor::zeros_like(point);
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = eval(probe);
    probe[i] = orig - step;
    const double down = eval(probe);
    probe[i] = orig;
    report.numeric[i] = (up - down) / (2.0 * step);
    const double rel = std::abs(report.analytic[i] - report.numeric[i]) / (std::abs(report.numeric[i]) + 1e-9);
    if (rel > report.max_relative_error || std::isnan(rel)) {
      report.max_relative_error = std::isnan(rel) ? INFINITY : rel;
      report.worst_index = i;
    }
  }
  return report;
}

double grad_check(const GraphBuilder& f, const Tensor& point, double step) {
  return grad_check_report(f, point, step).max_relative_error;
}

}  // namespace mixsynth::ad
