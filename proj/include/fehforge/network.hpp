#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fehforge/layers.hpp"

namespace fehforge::nn {

/// A sequential regression network mapping (batch, T, C) sequences to (batch, 1).
class Network {
 public:
  explicit Network(std::string name = "model");

  Sequential& root() noexcept { return *root_; }

  Tensor forward(const Tensor& x, const Mask& mask, const RunContext& ctx);
  /// Backpropagates d loss / d output through the last forward call; returns d loss / d x.
  Tensor backward(const Tensor& grad_out);

  /// Inference-mode forward returning one prediction per batch row.
  std::vector<double> predict(const Tensor& x, const Mask& mask);

  std::vector<Parameter*> parameters();
  std::vector<StateArray*> state();
  void zero_grad();
  std::size_t parameter_count();

  struct LayerCount {
    std::string name;
    std::size_t parameters;
  };
  /// Trainable counts of the top-level layers, in order.
  std::vector<LayerCount> layer_counts();

  /// Glorot-uniform draws for every parameter with fans set, from a single seeded stream
  /// in parameter order. Other parameters keep their constructed values.
  void initialize(std::uint64_t seed);

  /// Every parameter and state array, in collection order; used for early-stopping
  /// checkpoints held in memory.
  std::vector<Tensor> values();
  void set_values(const std::vector<Tensor>& values);

 private:
  std::unique_ptr<Sequential> root_;
};

}  // namespace fehforge::nn
