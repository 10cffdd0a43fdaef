#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fehforge/layers.hpp"

namespace fehforge::nn {

struct RecurrentOptions {
  std::size_t input_dim = 0;
  std::size_t units = 0;
  /// Emit every timestep (batch, T, units) instead of the final state (batch, units).
  bool return_sequences = false;
  /// Process timesteps from last to first; outputs stay aligned with input time.
  bool reverse = false;
  double kernel_l1 = 0.0, kernel_l2 = 0.0;
  double recurrent_l1 = 0.0, recurrent_l2 = 0.0;
};

/// Gated recurrent unit, reset-after formulation with separate input and recurrent biases:
///
///   z  = sigmoid(x Wz + bz + h Uz + rz)
///   r  = sigmoid(x Wr + br + h Ur + rr)
///   n  = tanh(x Wn + bn + r * (h Un + rn))
///   h' = z * h + (1 - z) * n
///
/// Gate blocks are laid out [z | r | n] along the last axis of kernel (in, 3u), recurrent
/// kernel (u, 3u) and the two bias vectors (3u), giving 3u(in + u + 2) parameters.
/// A masked timestep leaves the state unchanged and repeats the previous output.
class GRU final : public Layer {
 public:
  GRU(std::string name, const RecurrentOptions& options);
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

  const RecurrentOptions& options() const noexcept { return opt_; }
  Parameter& kernel() { return kernel_; }
  Parameter& recurrent_kernel() { return recurrent_; }

  static std::size_t count(std::size_t input_dim, std::size_t units) {
    return 3 * units * (input_dim + units + 2);
  }

 private:
  RecurrentOptions opt_;
  Parameter kernel_, recurrent_, input_bias_, recurrent_bias_;
  // cache, per step (batch x units) blocks in time order
  Tensor input_;
  Mask mask_;
  std::vector<double> h_prev_, z_, r_, n_, hu_n_;
};

/// Long short-term memory with gates [i | f | c | o] and a single bias vector:
/// 4(u(in + u) + u) parameters. Forget-gate biases start at 1.
class LSTM final : public Layer {
 public:
  LSTM(std::string name, const RecurrentOptions& options);
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

  const RecurrentOptions& options() const noexcept { return opt_; }
  Parameter& kernel() { return kernel_; }
  Parameter& recurrent_kernel() { return recurrent_; }
  Parameter& bias() { return bias_; }

  static std::size_t count(std::size_t input_dim, std::size_t units) {
    return 4 * (units * (input_dim + units) + units);
  }

 private:
  RecurrentOptions opt_;
  Parameter kernel_, recurrent_, bias_;
  Tensor input_;
  Mask mask_;
  std::vector<double> h_prev_, c_prev_, i_, f_, g_, o_, c_;
};

/// Runs a forward-time and a reversed copy of a recurrent layer over the same input and
/// concatenates their outputs along channels ([forward | backward]).
class Bidirectional final : public Layer {
 public:
  Bidirectional(std::string name, LayerPtr forward_layer, LayerPtr backward_layer,
                std::size_t units);
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  std::vector<Layer*> children() override;

  Layer& forward_layer() { return *fwd_; }
  Layer& backward_layer() { return *bwd_; }

 private:
  LayerPtr fwd_, bwd_;
  std::size_t units_;
  std::vector<std::size_t> out_shape_;
};

}  // namespace fehforge::nn
