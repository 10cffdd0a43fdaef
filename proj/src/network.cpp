#include "fehforge/network.hpp"

#include <cmath>

#include "fehforge/error.hpp"
#include "fehforge/rng.hpp"

namespace fehforge::nn {

Network::Network(std::string name) : root_(std::make_unique<Sequential>(std::move(name))) {}

Tensor Network::forward(const Tensor& x, const Mask& mask, const RunContext& ctx) {
  if (x.rank() != 3)
    fail(ErrorCode::ShapeMismatch, "network input must be (batch, T, C), got " + shape_string(x.shape));
  if (!mask.empty() && mask.size() != x.dim(0) * x.dim(1))
    fail(ErrorCode::ShapeMismatch, "mask does not match input " + shape_string(x.shape));
  return root_->forward(Signal{x, mask}, ctx).value;
}

Tensor Network::backward(const Tensor& grad_out) { return root_->backward(grad_out); }

std::vector<double> Network::predict(const Tensor& x, const Mask& mask) {
  const Tensor y = forward(x, mask, RunContext{false, 0});
  return y.data;
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  root_->collect_parameters(out);
  return out;
}

std::vector<StateArray*> Network::state() {
  std::vector<StateArray*> out;
  root_->collect_state(out);
  return out;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

std::size_t Network::parameter_count() { return root_->parameter_count(); }

std::vector<Network::LayerCount> Network::layer_counts() {
  std::vector<LayerCount> out;
  for (Layer* layer : root_->children()) out.push_back({layer->name(), layer->parameter_count()});
  return out;
}

void Network::initialize(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  for (Parameter* p : parameters()) {
    if (p->fan_in + p->fan_out == 0) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(p->fan_in + p->fan_out));
    for (double& v : p->value.data) v = rng.uniform(-limit, limit);
  }
}

std::vector<Tensor> Network::values() {
  std::vector<Tensor> out;
  for (Parameter* p : parameters()) out.push_back(p->value);
  for (StateArray* s : state()) out.push_back(s->value);
  return out;
}

void Network::set_values(const std::vector<Tensor>& values) {
  auto params = parameters();
  auto states = state();
  if (values.size() != params.size() + states.size())
    fail(ErrorCode::ShapeMismatch, "checkpoint does not match the network");
  std::size_t k = 0;
  for (Parameter* p : params) {
    if (!values[k].same_shape(p->value)) fail(ErrorCode::ShapeMismatch, "checkpoint shape for " + p->name);
    p->value = values[k++];
  }
  for (StateArray* s : states) {
    if (!values[k].same_shape(s->value)) fail(ErrorCode::ShapeMismatch, "checkpoint shape for " + s->name);
    s->value = values[k++];
  }
}

}  // namespace fehforge::nn
