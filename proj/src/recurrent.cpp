#include "fehforge/recurrent.hpp"

#include <algorithm>
#include <cmath>

#include "fehforge/error.hpp"

namespace fehforge::nn {

namespace {

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

void check_input(const Tensor& x, std::size_t input_dim, const std::string& who) {
  if (x.rank() != 3 || x.dim(2) != input_dim)
    fail(ErrorCode::ShapeMismatch, who + ": expected (batch, T, " + std::to_string(input_dim) +
                                       "), got " + shape_string(x.shape));
}

std::vector<std::size_t> output_shape(const RecurrentOptions& opt, std::size_t batch, std::size_t steps) {
  return opt.return_sequences ? std::vector<std::size_t>{batch, steps, opt.units}
                              : std::vector<std::size_t>{batch, opt.units};
}

}  // namespace

// ------------------------------------------------------------------------------ GRU

GRU::GRU(std::string name, const RecurrentOptions& options)
    : Layer(std::move(name)),
      opt_(options),
      kernel_(this->name() + "/kernel", {options.input_dim, 3 * options.units}),
      recurrent_(this->name() + "/recurrent_kernel", {options.units, 3 * options.units}),
      input_bias_(this->name() + "/input_bias", {3 * options.units}),
      recurrent_bias_(this->name() + "/recurrent_bias", {3 * options.units}) {
  if (options.units == 0 || options.input_dim == 0)
    fail(ErrorCode::InvalidConfig, this->name() + ": units and input_dim must be positive");
  kernel_.glorot(opt_.input_dim, kernel_.value.dim(1));
  recurrent_.glorot(opt_.units, recurrent_.value.dim(1));
  kernel_.l1 = opt_.kernel_l1;
  kernel_.l2 = opt_.kernel_l2;
  recurrent_.l1 = opt_.recurrent_l1;
  recurrent_.l2 = opt_.recurrent_l2;
}

Signal GRU::forward(const Signal& in, const RunContext&) {
  check_input(in.value, opt_.input_dim, name());
  const std::size_t batch = in.value.dim(0), steps = in.value.dim(1);
  const std::size_t u = opt_.units, gates = 3 * u, n_in = opt_.input_dim;
  input_ = in.value;
  mask_ = in.mask;

  std::vector<double> xw(batch * steps * gates);
  for (std::size_t r = 0; r < batch * steps; ++r)
    std::copy(input_bias_.value.data.begin(), input_bias_.value.data.end(), xw.begin() + r * gates);
  gemm_acc(batch * steps, n_in, gates, input_.ptr(), kernel_.value.ptr(), xw.data());

  const std::size_t block = batch * u;
  h_prev_.assign(steps * block, 0.0);
  z_.assign(steps * block, 0.0);
  r_.assign(steps * block, 0.0);
  n_.assign(steps * block, 0.0);
  hu_n_.assign(steps * block, 0.0);

  Signal out{Tensor(output_shape(opt_, batch, steps)), opt_.return_sequences ? in.mask : Mask{}};
  std::vector<double> h(block, 0.0), hu(batch * gates);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = opt_.reverse ? steps - 1 - s : s;
    for (std::size_t b = 0; b < batch; ++b)
      std::copy(recurrent_bias_.value.data.begin(), recurrent_bias_.value.data.end(),
                hu.begin() + b * gates);
    gemm_acc(batch, u, gates, h.data(), recurrent_.value.ptr(), hu.data());
    std::copy(h.begin(), h.end(), h_prev_.begin() + t * block);

    for (std::size_t b = 0; b < batch; ++b) {
      if (!step_valid(mask_, b, t, steps)) continue;
      const double* xg = xw.data() + (b * steps + t) * gates;
      const double* hg = hu.data() + b * gates;
      for (std::size_t j = 0; j < u; ++j) {
        const std::size_t k = t * block + b * u + j;
        const double z = sigmoid(xg[j] + hg[j]);
        const double r = sigmoid(xg[u + j] + hg[u + j]);
        const double n = std::tanh(xg[2 * u + j] + r * hg[2 * u + j]);
        z_[k] = z;
        r_[k] = r;
        n_[k] = n;
        hu_n_[k] = hg[2 * u + j];
        h[b * u + j] = z * h[b * u + j] + (1.0 - z) * n;
      }
    }
    if (opt_.return_sequences)
      for (std::size_t b = 0; b < batch; ++b)
        std::copy_n(h.begin() + b * u, u, out.value.data.begin() + (b * steps + t) * u);
  }
  if (!opt_.return_sequences) std::copy(h.begin(), h.end(), out.value.data.begin());
  return out;
}

Tensor GRU::backward(const Tensor& grad_out) {
  const std::size_t batch = input_.dim(0), steps = input_.dim(1);
  const std::size_t u = opt_.units, gates = 3 * u, n_in = opt_.input_dim, block = batch * u;
  if (grad_out.shape != output_shape(opt_, batch, steps))
    fail(ErrorCode::ShapeMismatch, name() + ": bad output gradient " + shape_string(grad_out.shape));

  std::vector<double> dh(block, 0.0), dh_prev(block), dhu(batch * gates);
  std::vector<double> dxw(batch * steps * gates, 0.0);
  if (!opt_.return_sequences) std::copy(grad_out.data.begin(), grad_out.data.end(), dh.begin());

  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = opt_.reverse ? steps - 1 - s : s;
    if (opt_.return_sequences)
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < u; ++j) dh[b * u + j] += grad_out.data[(b * steps + t) * u + j];

    std::fill(dhu.begin(), dhu.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      if (!step_valid(mask_, b, t, steps)) {
        std::copy_n(dh.begin() + b * u, u, dh_prev.begin() + b * u);
        continue;
      }
      double* dx_g = dxw.data() + (b * steps + t) * gates;
      double* dh_g = dhu.data() + b * gates;
      for (std::size_t j = 0; j < u; ++j) {
        const std::size_t k = t * block + b * u + j;
        const double z = z_[k], r = r_[k], n = n_[k], hp = h_prev_[k];
        const double g = dh[b * u + j];
        const double dz = g * (hp - n);
        const double dn = g * (1.0 - z);
        const double dan = dn * (1.0 - n * n);
        const double daz = dz * z * (1.0 - z);
        const double dar = dan * hu_n_[k] * r * (1.0 - r);
        dx_g[j] = daz;
        dx_g[u + j] = dar;
        dx_g[2 * u + j] = dan;
        dh_g[j] = daz;
        dh_g[u + j] = dar;
        dh_g[2 * u + j] = dan * r;
        dh_prev[b * u + j] = g * z;
      }
    }
    gemm_at_b_acc(batch, u, gates, h_prev_.data() + t * block, dhu.data(), recurrent_.grad.ptr());
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < gates; ++j) recurrent_bias_.grad.data[j] += dhu[b * gates + j];
    gemm_a_bt_acc(batch, gates, u, dhu.data(), recurrent_.value.ptr(), dh_prev.data());
    dh.swap(dh_prev);
  }

  gemm_at_b_acc(batch * steps, n_in, gates, input_.ptr(), dxw.data(), kernel_.grad.ptr());
  for (std::size_t r = 0; r < batch * steps; ++r)
    for (std::size_t j = 0; j < gates; ++j) input_bias_.grad.data[j] += dxw[r * gates + j];
  Tensor dx({batch, steps, n_in});
  gemm_a_bt_acc(batch * steps, gates, n_in, dxw.data(), kernel_.value.ptr(), dx.ptr());
  return dx;
}

void GRU::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&kernel_);
  out.push_back(&recurrent_);
  out.push_back(&input_bias_);
  out.push_back(&recurrent_bias_);
}

// ----------------------------------------------------------------------------- LSTM

LSTM::LSTM(std::string name, const RecurrentOptions& options)
    : Layer(std::move(name)),
      opt_(options),
      kernel_(this->name() + "/kernel", {options.input_dim, 4 * options.units}),
      recurrent_(this->name() + "/recurrent_kernel", {options.units, 4 * options.units}),
      bias_(this->name() + "/bias", {4 * options.units}) {
  if (options.units == 0 || options.input_dim == 0)
    fail(ErrorCode::InvalidConfig, this->name() + ": units and input_dim must be positive");
  kernel_.glorot(opt_.input_dim, kernel_.value.dim(1));
  recurrent_.glorot(opt_.units, recurrent_.value.dim(1));
  kernel_.l1 = opt_.kernel_l1;
  kernel_.l2 = opt_.kernel_l2;
  recurrent_.l1 = opt_.recurrent_l1;
  recurrent_.l2 = opt_.recurrent_l2;
  std::fill_n(bias_.value.data.begin() + options.units, options.units, 1.0);
}

Signal LSTM::forward(const Signal& in, const RunContext&) {
  check_input(in.value, opt_.input_dim, name());
  const std::size_t batch = in.value.dim(0), steps = in.value.dim(1);
  const std::size_t u = opt_.units, gates = 4 * u, n_in = opt_.input_dim, block = batch * u;
  input_ = in.value;
  mask_ = in.mask;

  std::vector<double> xw(batch * steps * gates);
  for (std::size_t r = 0; r < batch * steps; ++r)
    std::copy(bias_.value.data.begin(), bias_.value.data.end(), xw.begin() + r * gates);
  gemm_acc(batch * steps, n_in, gates, input_.ptr(), kernel_.value.ptr(), xw.data());

  for (auto* v : {&h_prev_, &c_prev_, &i_, &f_, &g_, &o_, &c_}) v->assign(steps * block, 0.0);

  Signal out{Tensor(output_shape(opt_, batch, steps)), opt_.return_sequences ? in.mask : Mask{}};
  std::vector<double> h(block, 0.0), c(block, 0.0), hu(batch * gates);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = opt_.reverse ? steps - 1 - s : s;
    std::fill(hu.begin(), hu.end(), 0.0);
    gemm_acc(batch, u, gates, h.data(), recurrent_.value.ptr(), hu.data());
    std::copy(h.begin(), h.end(), h_prev_.begin() + t * block);
    std::copy(c.begin(), c.end(), c_prev_.begin() + t * block);

    for (std::size_t b = 0; b < batch; ++b) {
      if (!step_valid(mask_, b, t, steps)) continue;
      const double* xg = xw.data() + (b * steps + t) * gates;
      const double* hg = hu.data() + b * gates;
      for (std::size_t j = 0; j < u; ++j) {
        const std::size_t k = t * block + b * u + j;
        const double ig = sigmoid(xg[j] + hg[j]);
        const double fg = sigmoid(xg[u + j] + hg[u + j]);
        const double gg = std::tanh(xg[2 * u + j] + hg[2 * u + j]);
        const double og = sigmoid(xg[3 * u + j] + hg[3 * u + j]);
        const double cn = fg * c[b * u + j] + ig * gg;
        i_[k] = ig;
        f_[k] = fg;
        g_[k] = gg;
        o_[k] = og;
        c_[k] = cn;
        c[b * u + j] = cn;
        h[b * u + j] = og * std::tanh(cn);
      }
    }
    if (opt_.return_sequences)
      for (std::size_t b = 0; b < batch; ++b)
        std::copy_n(h.begin() + b * u, u, out.value.data.begin() + (b * steps + t) * u);
  }
  if (!opt_.return_sequences) std::copy(h.begin(), h.end(), out.value.data.begin());
  return out;
}

Tensor LSTM::backward(const Tensor& grad_out) {
  const std::size_t batch = input_.dim(0), steps = input_.dim(1);
  const std::size_t u = opt_.units, gates = 4 * u, n_in = opt_.input_dim, block = batch * u;
  if (grad_out.shape != output_shape(opt_, batch, steps))
    fail(ErrorCode::ShapeMismatch, name() + ": bad output gradient " + shape_string(grad_out.shape));

  std::vector<double> dh(block, 0.0), dc(block, 0.0), dh_prev(block), da(batch * gates);
  std::vector<double> dxw(batch * steps * gates, 0.0);
  if (!opt_.return_sequences) std::copy(grad_out.data.begin(), grad_out.data.end(), dh.begin());

  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = opt_.reverse ? steps - 1 - s : s;
    if (opt_.return_sequences)
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < u; ++j) dh[b * u + j] += grad_out.data[(b * steps + t) * u + j];

    std::fill(da.begin(), da.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      if (!step_valid(mask_, b, t, steps)) {
        std::copy_n(dh.begin() + b * u, u, dh_prev.begin() + b * u);
        continue;
      }
      double* a = da.data() + b * gates;
      for (std::size_t j = 0; j < u; ++j) {
        const std::size_t k = t * block + b * u + j;
        const double ig = i_[k], fg = f_[k], gg = g_[k], og = o_[k];
        const double tc = std::tanh(c_[k]);
        const double gh = dh[b * u + j];
        const double dct = dc[b * u + j] + gh * og * (1.0 - tc * tc);
        a[j] = dct * gg * ig * (1.0 - ig);
        a[u + j] = dct * c_prev_[k] * fg * (1.0 - fg);
        a[2 * u + j] = dct * ig * (1.0 - gg * gg);
        a[3 * u + j] = gh * tc * og * (1.0 - og);
        dc[b * u + j] = dct * fg;
        dh_prev[b * u + j] = 0.0;
      }
      std::copy_n(a, gates, dxw.data() + (b * steps + t) * gates);
    }
    gemm_at_b_acc(batch, u, gates, h_prev_.data() + t * block, da.data(), recurrent_.grad.ptr());
    gemm_a_bt_acc(batch, gates, u, da.data(), recurrent_.value.ptr(), dh_prev.data());
    dh.swap(dh_prev);
  }

  gemm_at_b_acc(batch * steps, n_in, gates, input_.ptr(), dxw.data(), kernel_.grad.ptr());
  for (std::size_t r = 0; r < batch * steps; ++r)
    for (std::size_t j = 0; j < gates; ++j) bias_.grad.data[j] += dxw[r * gates + j];
  Tensor dx({batch, steps, n_in});
  gemm_a_bt_acc(batch * steps, gates, n_in, dxw.data(), kernel_.value.ptr(), dx.ptr());
  return dx;
}

void LSTM::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&kernel_);
  out.push_back(&recurrent_);
  out.push_back(&bias_);
}

// -------------------------------------------------------------------- Bidirectional

Bidirectional::Bidirectional(std::string name, LayerPtr forward_layer, LayerPtr backward_layer,
                             std::size_t units)
    : Layer(std::move(name)), fwd_(std::move(forward_layer)), bwd_(std::move(backward_layer)), units_(units) {}

Signal Bidirectional::forward(const Signal& in, const RunContext& ctx) {
  const Signal a = fwd_->forward(in, ctx);
  const Signal b = bwd_->forward(in, ctx);
  if (!a.value.same_shape(b.value) || a.value.shape.back() != units_)
    fail(ErrorCode::ShapeMismatch, name() + ": direction outputs disagree");
  out_shape_ = a.value.shape;
  out_shape_.back() = 2 * units_;
  Signal out{Tensor(out_shape_), a.mask};
  const std::size_t rows = a.value.size() / units_;
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.value.data.begin() + r * units_, units_, out.value.data.begin() + r * 2 * units_);
    std::copy_n(b.value.data.begin() + r * units_, units_,
                out.value.data.begin() + r * 2 * units_ + units_);
  }
  return out;
}

Tensor Bidirectional::backward(const Tensor& grad_out) {
  if (grad_out.shape != out_shape_)
    fail(ErrorCode::ShapeMismatch, name() + ": bad output gradient " + shape_string(grad_out.shape));
  std::vector<std::size_t> half = out_shape_;
  half.back() = units_;
  Tensor ga(half), gb(half);
  const std::size_t rows = ga.size() / units_;
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(grad_out.data.begin() + r * 2 * units_, units_, ga.data.begin() + r * units_);
    std::copy_n(grad_out.data.begin() + r * 2 * units_ + units_, units_, gb.data.begin() + r * units_);
  }
  Tensor dx = fwd_->backward(ga);
  const Tensor dxb = bwd_->backward(gb);
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dxb.data[i];
  return dx;
}

void Bidirectional::collect_parameters(std::vector<Parameter*>& out) {
  fwd_->collect_parameters(out);
  bwd_->collect_parameters(out);
}

std::vector<Layer*> Bidirectional::children() { return {fwd_.get(), bwd_.get()}; }

}  // namespace fehforge::nn
