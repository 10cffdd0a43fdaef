#include "fehforge/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fehforge/error.hpp"
#include "fehforge/rng.hpp"

namespace fehforge::nn {

namespace {

void expect_rank(const Tensor& t, std::size_t rank, const std::string& who) {
  if (t.rank() != rank)
    fail(ErrorCode::ShapeMismatch, who + ": expected rank " + std::to_string(rank) + ", got " +
                                       shape_string(t.shape));
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& who) {
  if (!a.same_shape(b))
    fail(ErrorCode::ShapeMismatch, who + ": gradient shape " + shape_string(b.shape) +
                                       " does not match " + shape_string(a.shape));
}

}  // namespace

std::size_t Layer::parameter_count() {
  std::vector<Parameter*> params;
  collect_parameters(params);
  std::size_t total = 0;
  for (const auto* p : params) total += p->value.size();
  return total;
}

// ---------------------------------------------------------------------------- Dense

Dense::Dense(std::string name, std::size_t in, std::size_t out)
    : Layer(std::move(name)),
      kernel_(this->name() + "/kernel", {in, out}),
      bias_(this->name() + "/bias", {out}) {
  kernel_.glorot(in, out);
}

Signal Dense::forward(const Signal& in, const RunContext&) {
  expect_rank(in.value, 2, name());
  const std::size_t batch = in.value.dim(0), n_in = kernel_.value.dim(0), n_out = kernel_.value.dim(1);
  if (in.value.dim(1) != n_in)
    fail(ErrorCode::ShapeMismatch, name() + ": input features " + std::to_string(in.value.dim(1)) +
                                       " != " + std::to_string(n_in));
  input_ = in.value;
  Tensor y({batch, n_out});
  for (std::size_t b = 0; b < batch; ++b)
    std::copy(bias_.value.data.begin(), bias_.value.data.end(), y.data.begin() + b * n_out);
  gemm_acc(batch, n_in, n_out, input_.ptr(), kernel_.value.ptr(), y.ptr());
  return {std::move(y), {}};
}

Tensor Dense::backward(const Tensor& grad_out) {
  const std::size_t batch = input_.dim(0), n_in = kernel_.value.dim(0), n_out = kernel_.value.dim(1);
  if (grad_out.shape != std::vector<std::size_t>{batch, n_out})
    fail(ErrorCode::ShapeMismatch, name() + ": bad output gradient " + shape_string(grad_out.shape));
  gemm_at_b_acc(batch, n_in, n_out, input_.ptr(), grad_out.ptr(), kernel_.grad.ptr());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < n_out; ++j) bias_.grad.data[j] += grad_out.data[b * n_out + j];
  Tensor dx({batch, n_in});
  gemm_a_bt_acc(batch, n_out, n_in, grad_out.ptr(), kernel_.value.ptr(), dx.ptr());
  return dx;
}

void Dense::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&kernel_);
  out.push_back(&bias_);
}

// --------------------------------------------------------------------------- Conv1D

Conv1D::Conv1D(std::string name, std::size_t in_channels, std::size_t filters,
               std::size_t kernel_size, bool use_bias)
    : Layer(std::move(name)),
      in_channels_(in_channels),
      filters_(filters),
      kernel_size_(kernel_size),
      use_bias_(use_bias),
      kernel_(this->name() + "/kernel", {kernel_size, in_channels, filters}),
      bias_(this->name() + "/bias", {use_bias ? filters : 0}) {
  kernel_.glorot(kernel_size * in_channels, kernel_size * filters);
  if (kernel_size == 0) fail(ErrorCode::InvalidConfig, this->name() + ": kernel size must be positive");
}

Signal Conv1D::forward(const Signal& in, const RunContext&) {
  expect_rank(in.value, 3, name());
  const std::size_t batch = in.value.dim(0), steps = in.value.dim(1);
  if (in.value.dim(2) != in_channels_)
    fail(ErrorCode::ShapeMismatch, name() + ": input channels " + std::to_string(in.value.dim(2)) +
                                       " != " + std::to_string(in_channels_));
  input_ = in.value;
  mask_ = in.mask;
  if (!mask_.empty()) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < steps; ++t)
        if (!mask_[b * steps + t])
          std::fill_n(input_.data.begin() + (b * steps + t) * in_channels_, in_channels_, 0.0);
  }

  Tensor y({batch, steps, filters_});
  if (use_bias_) {
    for (std::size_t r = 0; r < batch * steps; ++r)
      std::copy(bias_.value.data.begin(), bias_.value.data.end(), y.data.begin() + r * filters_);
  }
  const auto left = static_cast<std::ptrdiff_t>((kernel_size_ - 1) / 2);
  const auto n_steps = static_cast<std::ptrdiff_t>(steps);
  for (std::size_t j = 0; j < kernel_size_; ++j) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - left;
    const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(n_steps, n_steps - shift);
    if (t1 <= t0) continue;
    const double* w = kernel_.value.ptr() + j * in_channels_ * filters_;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* x = input_.ptr() + (b * steps + static_cast<std::size_t>(t0 + shift)) * in_channels_;
      double* out = y.ptr() + (b * steps + static_cast<std::size_t>(t0)) * filters_;
      gemm_acc(static_cast<std::size_t>(t1 - t0), in_channels_, filters_, x, w, out);
    }
  }
  return {std::move(y), in.mask};
}

Tensor Conv1D::backward(const Tensor& grad_out) {
  const std::size_t batch = input_.dim(0), steps = input_.dim(1);
  if (grad_out.shape != std::vector<std::size_t>{batch, steps, filters_})
    fail(ErrorCode::ShapeMismatch, name() + ": bad output gradient " + shape_string(grad_out.shape));
  if (use_bias_) {
    for (std::size_t r = 0; r < batch * steps; ++r)
      for (std::size_t f = 0; f < filters_; ++f) bias_.grad.data[f] += grad_out.data[r * filters_ + f];
  }
  Tensor dx({batch, steps, in_channels_});
  const auto left = static_cast<std::ptrdiff_t>((kernel_size_ - 1) / 2);
  const auto n_steps = static_cast<std::ptrdiff_t>(steps);
  for (std::size_t j = 0; j < kernel_size_; ++j) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - left;
    const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(n_steps, n_steps - shift);
    if (t1 <= t0) continue;
    const auto rows = static_cast<std::size_t>(t1 - t0);
    const double* w = kernel_.value.ptr() + j * in_channels_ * filters_;
    double* dw = kernel_.grad.ptr() + j * in_channels_ * filters_;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t in_row = b * steps + static_cast<std::size_t>(t0 + shift);
      const std::size_t out_row = b * steps + static_cast<std::size_t>(t0);
      gemm_at_b_acc(rows, in_channels_, filters_, input_.ptr() + in_row * in_channels_,
                    grad_out.ptr() + out_row * filters_, dw);
      gemm_a_bt_acc(rows, filters_, in_channels_, grad_out.ptr() + out_row * filters_, w,
                    dx.ptr() + in_row * in_channels_);
    }
  }
  if (!mask_.empty()) {
    for (std::size_t r = 0; r < batch * steps; ++r)
      if (!mask_[r]) std::fill_n(dx.data.begin() + r * in_channels_, in_channels_, 0.0);
  }
  return dx;
}

void Conv1D::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&kernel_);
  if (use_bias_) out.push_back(&bias_);
}

// ------------------------------------------------------------------------ BatchNorm

BatchNorm::BatchNorm(std::string name, std::size_t channels, double momentum, double epsilon)
    : Layer(std::move(name)),
      channels_(channels),
      momentum_(momentum),
      epsilon_(epsilon),
      gamma_(this->name() + "/gamma", {channels}),
      beta_(this->name() + "/beta", {channels}),
      running_mean_{this->name() + "/running_mean", Tensor({channels}, 0.0)},
      running_var_{this->name() + "/running_var", Tensor({channels}, 1.0)} {
  gamma_.value.fill(1.0);
}

Signal BatchNorm::forward(const Signal& in, const RunContext& ctx) {
  const Tensor& x = in.value;
  if ((x.rank() != 2 && x.rank() != 3) || x.shape.back() != channels_)
    fail(ErrorCode::ShapeMismatch, name() + ": unexpected input " + shape_string(x.shape));
  const std::size_t rows = x.size() / channels_;
  mask_ = x.rank() == 3 ? in.mask : Mask{};
  training_ = ctx.training;
  auto valid = [&](std::size_t r) { return mask_.empty() || mask_[r] != 0; };

  std::vector<double> mean(channels_, 0.0), var(channels_, 0.0);
  if (training_) {
    valid_count_ = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!valid(r)) continue;
      ++valid_count_;
      for (std::size_t c = 0; c < channels_; ++c) mean[c] += x.data[r * channels_ + c];
    }
    if (valid_count_ < 2)
      fail(ErrorCode::DegenerateBatch, name() + ": batch statistics need at least 2 valid positions");
    const double n = static_cast<double>(valid_count_);
    for (double& m : mean) m /= n;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!valid(r)) continue;
      for (std::size_t c = 0; c < channels_; ++c) {
        const double d = x.data[r * channels_ + c] - mean[c];
        var[c] += d * d;
      }
    }
    for (double& v : var) v /= n;
    for (std::size_t c = 0; c < channels_; ++c) {
      running_mean_.value.data[c] = momentum_ * running_mean_.value.data[c] + (1.0 - momentum_) * mean[c];
      running_var_.value.data[c] = momentum_ * running_var_.value.data[c] + (1.0 - momentum_) * var[c];
    }
  } else {
    mean = running_mean_.value.data;
    var = running_var_.value.data;
  }

  inv_std_.resize(channels_);
  for (std::size_t c = 0; c < channels_; ++c) inv_std_[c] = 1.0 / std::sqrt(var[c] + epsilon_);

  normalized_ = Tensor(x.shape);
  Tensor y(x.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!valid(r)) continue;
    for (std::size_t c = 0; c < channels_; ++c) {
      const std::size_t i = r * channels_ + c;
      const double xhat = (x.data[i] - mean[c]) * inv_std_[c];
      normalized_.data[i] = xhat;
      y.data[i] = gamma_.value.data[c] * xhat + beta_.value.data[c];
    }
  }
  return {std::move(y), in.mask};
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  require_same_shape(normalized_, grad_out, name());
  const std::size_t rows = grad_out.size() / channels_;
  auto valid = [&](std::size_t r) { return mask_.empty() || mask_[r] != 0; };
  Tensor dx(grad_out.shape);
  std::vector<double> sum_dxhat(channels_, 0.0), sum_dxhat_xhat(channels_, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!valid(r)) continue;
    for (std::size_t c = 0; c < channels_; ++c) {
      const std::size_t i = r * channels_ + c;
      const double dy = grad_out.data[i];
      gamma_.grad.data[c] += dy * normalized_.data[i];
      beta_.grad.data[c] += dy;
      const double dxhat = dy * gamma_.value.data[c];
      sum_dxhat[c] += dxhat;
      sum_dxhat_xhat[c] += dxhat * normalized_.data[i];
    }
  }
  if (training_) {
    const double n = static_cast<double>(valid_count_);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!valid(r)) continue;
      for (std::size_t c = 0; c < channels_; ++c) {
        const std::size_t i = r * channels_ + c;
        const double dxhat = grad_out.data[i] * gamma_.value.data[c];
        dx.data[i] = inv_std_[c] / n *
                     (n * dxhat - sum_dxhat[c] - normalized_.data[i] * sum_dxhat_xhat[c]);
      }
    }
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      if (!valid(r)) continue;
      for (std::size_t c = 0; c < channels_; ++c) {
        const std::size_t i = r * channels_ + c;
        dx.data[i] = grad_out.data[i] * gamma_.value.data[c] * inv_std_[c];
      }
    }
  }
  return dx;
}

void BatchNorm::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void BatchNorm::collect_state(std::vector<StateArray*>& out) {
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// ----------------------------------------------------------------------------- ReLU

Signal ReLU::forward(const Signal& in, const RunContext&) {
  output_ = in.value;
  for (double& v : output_.data) v = v > 0.0 ? v : 0.0;
  return {output_, in.mask};
}

Tensor ReLU::backward(const Tensor& grad_out) {
  require_same_shape(output_, grad_out, name());
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(output_.data[i] > 0.0)) dx.data[i] = 0.0;
  return dx;
}

// -------------------------------------------------------------------------- Dropout

Dropout::Dropout(std::string name, double rate, std::uint64_t stream_id)
    : Layer(std::move(name)), rate_(rate), stream_id_(stream_id) {
  if (!(rate >= 0.0 && rate < 1.0))
    fail(ErrorCode::InvalidRate, this->name() + ": dropout rate must lie in [0, 1)");
}

Signal Dropout::forward(const Signal& in, const RunContext& ctx) {
  scale_.clear();
  if (!ctx.training || rate_ == 0.0) return in;
  Rng rng(derive_seed(ctx.dropout_seed, "dropout", stream_id_));
  const double keep_scale = 1.0 / (1.0 - rate_);
  scale_.resize(in.value.size());
  Signal out{in.value, in.mask};
  for (std::size_t i = 0; i < scale_.size(); ++i) {
    scale_[i] = rng.uniform() >= rate_ ? keep_scale : 0.0;
    out.value.data[i] *= scale_[i];
  }
  return out;
}

Tensor Dropout::backward(const Tensor& grad_out) {
  if (scale_.empty()) return grad_out;
  if (grad_out.size() != scale_.size())
    fail(ErrorCode::ShapeMismatch, name() + ": gradient size mismatch");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= scale_[i];
  return dx;
}

// ---------------------------------------------------------------- GlobalAveragePool

Signal GlobalAveragePool::forward(const Signal& in, const RunContext&) {
  expect_rank(in.value, 3, name());
  in_shape_ = in.value.shape;
  mask_ = in.mask;
  const std::size_t batch = in_shape_[0], steps = in_shape_[1], channels = in_shape_[2];
  Tensor y({batch, channels});
  inv_counts_.assign(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t count = 0;
    for (std::size_t t = 0; t < steps; ++t) {
      if (!step_valid(mask_, b, t, steps)) continue;
      ++count;
      const double* x = in.value.ptr() + (b * steps + t) * channels;
      for (std::size_t c = 0; c < channels; ++c) y.data[b * channels + c] += x[c];
    }
    inv_counts_[b] = count ? 1.0 / static_cast<double>(count) : 0.0;
    for (std::size_t c = 0; c < channels; ++c) y.data[b * channels + c] *= inv_counts_[b];
  }
  return {std::move(y), {}};
}

Tensor GlobalAveragePool::backward(const Tensor& grad_out) {
  const std::size_t batch = in_shape_[0], steps = in_shape_[1], channels = in_shape_[2];
  if (grad_out.shape != std::vector<std::size_t>{batch, channels})
    fail(ErrorCode::ShapeMismatch, name() + ": bad output gradient " + shape_string(grad_out.shape));
  Tensor dx(in_shape_);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t) {
      if (!step_valid(mask_, b, t, steps)) continue;
      for (std::size_t c = 0; c < channels; ++c)
        dx.data[(b * steps + t) * channels + c] = grad_out.data[b * channels + c] * inv_counts_[b];
    }
  return dx;
}

// ------------------------------------------------------------------------ MaxPool1D

MaxPool1D::MaxPool1D(std::string name, std::size_t window, std::size_t stride, bool centered)
    : Layer(std::move(name)), window_(window), stride_(stride), centered_(centered) {
  if (window == 0 || stride == 0)
    fail(ErrorCode::InvalidConfig, this->name() + ": pooling window and stride must be positive");
}

Signal MaxPool1D::forward(const Signal& in, const RunContext&) {
  expect_rank(in.value, 3, name());
  in_shape_ = in.value.shape;
  const std::size_t batch = in_shape_[0], steps = in_shape_[1], channels = in_shape_[2];
  const std::size_t out_steps = output_length(steps, stride_);
  const auto offset = static_cast<std::ptrdiff_t>(centered_ ? (window_ - 1) / 2 : 0);

  Signal out{Tensor({batch, out_steps, channels}), {}};
  if (!in.mask.empty()) out.mask.assign(batch * out_steps, 0);
  argmax_.assign(batch * out_steps * channels, -1);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out_steps; ++o) {
      const std::size_t anchor = o * stride_;
      if (!step_valid(in.mask, b, anchor, steps)) continue;
      if (!out.mask.empty()) out.mask[b * out_steps + o] = 1;
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(anchor) - offset;
      for (std::size_t c = 0; c < channels; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t best_idx = -1;
        for (std::size_t j = 0; j < window_; ++j) {
          const std::ptrdiff_t s = start + static_cast<std::ptrdiff_t>(j);
          if (s < 0 || s >= static_cast<std::ptrdiff_t>(steps)) continue;
          if (!step_valid(in.mask, b, static_cast<std::size_t>(s), steps)) continue;
          const std::size_t idx = (b * steps + static_cast<std::size_t>(s)) * channels + c;
          if (in.value.data[idx] > best) {
            best = in.value.data[idx];
            best_idx = static_cast<std::ptrdiff_t>(idx);
          }
        }
        const std::size_t oi = (b * out_steps + o) * channels + c;
        argmax_[oi] = best_idx;
        out.value.data[oi] = best_idx >= 0 ? best : 0.0;
      }
    }
  }
  return out;
}

Tensor MaxPool1D::backward(const Tensor& grad_out) {
  if (grad_out.size() != argmax_.size())
    fail(ErrorCode::ShapeMismatch, name() + ": gradient size mismatch");
  Tensor dx(in_shape_);
  for (std::size_t i = 0; i < argmax_.size(); ++i)
    if (argmax_[i] >= 0) dx.data[static_cast<std::size_t>(argmax_[i])] += grad_out.data[i];
  return dx;
}

// ----------------------------------------------------------------------- Sequential

Signal Sequential::forward(const Signal& in, const RunContext& ctx) {
  Signal s = in;
  for (auto& layer : layers_) s = layer->forward(s, ctx);
  return s;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect_parameters(std::vector<Parameter*>& out) {
  for (auto& layer : layers_) layer->collect_parameters(out);
}

void Sequential::collect_state(std::vector<StateArray*>& out) {
  for (auto& layer : layers_) layer->collect_state(out);
}

std::vector<Layer*> Sequential::children() {
  std::vector<Layer*> out;
  for (auto& layer : layers_) out.push_back(layer.get());
  return out;
}

// ------------------------------------------------------------------------- Residual

Residual::Residual(std::string name, std::unique_ptr<Sequential> main,
                   std::unique_ptr<Sequential> shortcut)
    : Layer(std::move(name)), main_(std::move(main)), shortcut_(std::move(shortcut)) {}

Signal Residual::forward(const Signal& in, const RunContext& ctx) {
  Signal a = main_->forward(in, ctx);
  const Tensor skip = shortcut_ ? shortcut_->forward(in, ctx).value : in.value;
  if (!a.value.same_shape(skip))
    fail(ErrorCode::ShapeMismatch, name() + ": residual branch " + shape_string(a.value.shape) +
                                       " vs shortcut " + shape_string(skip.shape));
  output_ = std::move(a.value);
  const std::size_t channels = output_.shape.back();
  for (std::size_t i = 0; i < output_.size(); ++i) {
    const double v = output_.data[i] + skip.data[i];
    const bool masked = !in.mask.empty() && !in.mask[i / channels];
    output_.data[i] = (!masked && v > 0.0) ? v : 0.0;
  }
  return {output_, in.mask};
}

Tensor Residual::backward(const Tensor& grad_out) {
  require_same_shape(output_, grad_out, name());
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(output_.data[i] > 0.0)) g.data[i] = 0.0;
  Tensor dx = main_->backward(g);
  const Tensor ds = shortcut_ ? shortcut_->backward(g) : g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += ds.data[i];
  return dx;
}

void Residual::collect_parameters(std::vector<Parameter*>& out) {
  main_->collect_parameters(out);
  if (shortcut_) shortcut_->collect_parameters(out);
}

void Residual::collect_state(std::vector<StateArray*>& out) {
  main_->collect_state(out);
  if (shortcut_) shortcut_->collect_state(out);
}

std::vector<Layer*> Residual::children() {
  std::vector<Layer*> out{main_.get()};
  if (shortcut_) out.push_back(shortcut_.get());
  return out;
}

// ------------------------------------------------------------------ InceptionModule

InceptionModule::InceptionModule(std::string name, std::size_t in_channels, std::size_t bottleneck,
                                 std::size_t branch_filters,
                                 const std::vector<std::size_t>& kernel_sizes,
                                 std::size_t pool_size, double bn_momentum, double bn_epsilon)
    : Layer(std::move(name)), branch_filters_(branch_filters) {
  const std::string& n = this->name();
  bottleneck_ = std::make_unique<Conv1D>(n + "/bottleneck", in_channels, bottleneck, 1, false);
  for (std::size_t k : kernel_sizes)
    branches_.push_back(std::make_unique<Conv1D>(n + "/conv" + std::to_string(k), bottleneck,
                                                 branch_filters, k, false));
  pool_ = std::make_unique<MaxPool1D>(n + "/maxpool", pool_size, 1, true);
  pool_conv_ = std::make_unique<Conv1D>(n + "/pool_conv", in_channels, branch_filters, 1, false);
  norm_ = std::make_unique<BatchNorm>(n + "/bn", output_channels(), bn_momentum, bn_epsilon);
  relu_ = std::make_unique<ReLU>(n + "/relu");
}

Signal InceptionModule::forward(const Signal& in, const RunContext& ctx) {
  expect_rank(in.value, 3, name());
  const std::size_t batch = in.value.dim(0), steps = in.value.dim(1);
  const std::size_t total = output_channels(), f = branch_filters_;
  const Signal squeezed = bottleneck_->forward(in, ctx);

  Signal cat{Tensor({batch, steps, total}), in.mask};
  auto place = [&](const Tensor& part, std::size_t slot) {
    for (std::size_t r = 0; r < batch * steps; ++r)
      std::copy_n(part.data.begin() + r * f, f, cat.value.data.begin() + r * total + slot * f);
  };
  for (std::size_t i = 0; i < branches_.size(); ++i)
    place(branches_[i]->forward(squeezed, ctx).value, i);
  place(pool_conv_->forward(pool_->forward(in, ctx), ctx).value, branches_.size());

  return relu_->forward(norm_->forward(cat, ctx), ctx);
}

Tensor InceptionModule::backward(const Tensor& grad_out) {
  const Tensor g = norm_->backward(relu_->backward(grad_out));
  const std::size_t batch = g.dim(0), steps = g.dim(1), total = g.dim(2), f = branch_filters_;
  auto slice = [&](std::size_t slot) {
    Tensor part({batch, steps, f});
    for (std::size_t r = 0; r < batch * steps; ++r)
      std::copy_n(g.data.begin() + r * total + slot * f, f, part.data.begin() + r * f);
    return part;
  };
  Tensor d_squeezed;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    Tensor d = branches_[i]->backward(slice(i));
    if (d_squeezed.data.empty())
      d_squeezed = std::move(d);
    else
      for (std::size_t k = 0; k < d.size(); ++k) d_squeezed.data[k] += d.data[k];
  }
  Tensor dx = bottleneck_->backward(d_squeezed);
  const Tensor dpool = pool_->backward(pool_conv_->backward(slice(branches_.size())));
  for (std::size_t k = 0; k < dx.size(); ++k) dx.data[k] += dpool.data[k];
  return dx;
}

void InceptionModule::collect_parameters(std::vector<Parameter*>& out) {
  bottleneck_->collect_parameters(out);
  for (auto& b : branches_) b->collect_parameters(out);
  pool_conv_->collect_parameters(out);
  norm_->collect_parameters(out);
}

void InceptionModule::collect_state(std::vector<StateArray*>& out) { norm_->collect_state(out); }

std::vector<Layer*> InceptionModule::children() {
  std::vector<Layer*> out{bottleneck_.get()};
  for (auto& b : branches_) out.push_back(b.get());
  out.push_back(pool_.get());
  out.push_back(pool_conv_.get());
  out.push_back(norm_.get());
  out.push_back(relu_.get());
  return out;
}

}  // namespace fehforge::nn
