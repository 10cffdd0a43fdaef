#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fehforge/tensor.hpp"

namespace fehforge::nn {

/// A trainable array with its gradient and regularisation coefficients. Arrays with
/// non-zero fans are Glorot-uniform initialised; the rest keep their constructed value.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  double l1 = 0.0;
  double l2 = 0.0;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;

  Parameter() = default;
  Parameter(std::string n, std::vector<std::size_t> shape)
      : name(std::move(n)), value(shape), grad(std::move(shape)) {}
  void zero_grad() { grad.fill(0.0); }
  Parameter& glorot(std::size_t in, std::size_t out) {
    fan_in = in;
    fan_out = out;
    return *this;
  }
};

/// Non-trainable persistent state (batch-norm running statistics).
struct StateArray {
  std::string name;
  Tensor value;
};

struct RunContext {
  bool training = false;
  /// Seeds dropout masks; identical seeds give identical masks.
  std::uint64_t dropout_seed = 0;
};

/// A tensor flowing through the network together with its timestep mask.
struct Signal {
  Tensor value;
  Mask mask;
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  /// Caches whatever backward() needs from this call.
  virtual Signal forward(const Signal& in, const RunContext& ctx) = 0;
  /// Gradient w.r.t. the last forward input; parameter gradients are accumulated.
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual void collect_parameters(std::vector<Parameter*>&) {}
  virtual void collect_state(std::vector<StateArray*>&) {}
  /// Direct children, for per-layer reporting of composite layers.
  virtual std::vector<Layer*> children() { return {}; }

  std::size_t parameter_count();
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

using LayerPtr = std::unique_ptr<Layer>;

class Dense final : public Layer {
 public:
  Dense(std::string name, std::size_t in, std::size_t out);
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

  Parameter& kernel() { return kernel_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter kernel_, bias_;
  Tensor input_;
};

/// Stride-1 convolution along time with "same" padding: for kernel size k the input is
/// padded by (k-1)/2 steps on the left and the remainder on the right. Masked input
/// steps are read as zeros.
class Conv1D final : public Layer {
 public:
  Conv1D(std::string name, std::size_t in_channels, std::size_t filters, std::size_t kernel_size,
         bool use_bias = true);
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

  Parameter& kernel() { return kernel_; }
  std::size_t filters() const noexcept { return filters_; }

 private:
  std::size_t in_channels_, filters_, kernel_size_;
  bool use_bias_;
  Parameter kernel_, bias_;
  Tensor input_;  // masked copy
  Mask mask_;
};

/// Per-channel batch normalisation over every valid (batch, timestep) position, or over
/// the batch for flat inputs. Masked positions are emitted as zeros.
class BatchNorm final : public Layer {
 public:
  BatchNorm(std::string name, std::size_t channels, double momentum = 0.99, double epsilon = 1e-5);
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_state(std::vector<StateArray*>& out) override;

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  StateArray& running_mean() { return running_mean_; }
  StateArray& running_var() { return running_var_; }

 private:
  std::size_t channels_;
  double momentum_, epsilon_;
  Parameter gamma_, beta_;
  StateArray running_mean_, running_var_;
  // cache
  bool training_ = false;
  Tensor normalized_;
  std::vector<double> inv_std_;
  Mask mask_;
  std::size_t valid_count_ = 0;
};

class ReLU final : public Layer {
 public:
  using Layer::Layer;
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor output_;
};

/// Inverted dropout: kept units are scaled by 1/(1-rate) in training, identity otherwise.
class Dropout final : public Layer {
 public:
  Dropout(std::string name, double rate, std::uint64_t stream_id);
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;

  double rate() const noexcept { return rate_; }

 private:
  double rate_;
  std::uint64_t stream_id_;
  std::vector<double> scale_;  // empty when the last call was the identity
};

/// Mean over valid timesteps: (batch, T, C) -> (batch, C).
class GlobalAveragePool final : public Layer {
 public:
  using Layer::Layer;
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<std::size_t> in_shape_;
  Mask mask_;
  std::vector<double> inv_counts_;
};

/// Max over a window of valid timesteps. Output step o covers input steps
/// [o*stride - offset, o*stride - offset + window), offset = (window-1)/2 when centred.
/// An output step is valid when input step o*stride is valid.
class MaxPool1D final : public Layer {
 public:
  MaxPool1D(std::string name, std::size_t window, std::size_t stride, bool centered);
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;

  static std::size_t output_length(std::size_t steps, std::size_t stride) {
    return (steps + stride - 1) / stride;
  }

 private:
  std::size_t window_, stride_;
  bool centered_;
  std::vector<std::size_t> in_shape_;
  std::vector<std::ptrdiff_t> argmax_;  // flat input index, -1 for empty windows
};

class Sequential final : public Layer {
 public:
  explicit Sequential(std::string name) : Layer(std::move(name)) {}
  Sequential& add(LayerPtr layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_state(std::vector<StateArray*>& out) override;
  std::vector<Layer*> children() override;

  std::size_t size() const noexcept { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<LayerPtr> layers_;
};

/// y = ReLU(main(x) + shortcut(x)); the shortcut is the identity when absent.
class Residual final : public Layer {
 public:
  Residual(std::string name, std::unique_ptr<Sequential> main, std::unique_ptr<Sequential> shortcut);
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_state(std::vector<StateArray*>& out) override;
  std::vector<Layer*> children() override;

  Sequential& main() { return *main_; }

 private:
  std::unique_ptr<Sequential> main_, shortcut_;
  Tensor output_;
};

/// Inception module: a bottleneck convolution feeding parallel convolutions of several
/// lengths, a parallel max-pool -> 1x1 convolution branch on the module input, channel
/// concatenation, then batch norm and ReLU.
class InceptionModule final : public Layer {
 public:
  InceptionModule(std::string name, std::size_t in_channels, std::size_t bottleneck,
                  std::size_t branch_filters, const std::vector<std::size_t>& kernel_sizes,
                  std::size_t pool_size, double bn_momentum, double bn_epsilon);
  Signal forward(const Signal& in, const RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_state(std::vector<StateArray*>& out) override;
  std::vector<Layer*> children() override;

  std::size_t output_channels() const noexcept { return (branches_.size() + 1) * branch_filters_; }

 private:
  std::size_t branch_filters_;
  std::unique_ptr<Conv1D> bottleneck_;
  std::vector<std::unique_ptr<Conv1D>> branches_;
  std::unique_ptr<MaxPool1D> pool_;
  std::unique_ptr<Conv1D> pool_conv_;
  std::unique_ptr<BatchNorm> norm_;
  std::unique_ptr<ReLU> relu_;
};

}  // namespace fehforge::nn
