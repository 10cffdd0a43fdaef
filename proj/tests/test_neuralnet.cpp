#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "fehforge/error.hpp"
#include "fehforge/layers.hpp"
#include "fehforge/network.hpp"
#include "fehforge/optim.hpp"
#include "fehforge/recurrent.hpp"
#include "fehforge/rng.hpp"
#include "gradcheck.hpp"

using namespace fehforge;
using namespace fehforge::nn;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double scale = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

void randomize(Layer& layer, std::uint64_t seed, double scale = 0.5) {
  std::vector<Parameter*> params;
  layer.collect_parameters(params);
  Rng rng(seed);
  for (Parameter* p : params)
    for (double& v : p->value.data) v = scale * rng.normal();
}

struct LayerCheck {
  double param_error = 0.0;
  double input_error = 0.0;
};

// Central differences of Σ c·y against backprop for a single layer.
LayerCheck check_layer(Layer& layer, const Signal& in, const RunContext& ctx, double step) {
  const Tensor y0 = layer.forward(in, ctx).value;
  Rng rng(99);
  Tensor coef(y0.shape);
  for (double& c : coef.data) c = rng.uniform(-1.0, 1.0);
  auto loss = [&](const Signal& s) {
    const Tensor y = layer.forward(s, ctx).value;
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) total += coef.data[i] * y.data[i];
    return total;
  };
  std::vector<Parameter*> params;
  layer.collect_parameters(params);
  for (Parameter* p : params) p->zero_grad();
  layer.forward(in, ctx);
  const Tensor dx = layer.backward(coef);
  std::vector<std::vector<double>> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad.data);

  LayerCheck r;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k]->value.size(); ++i) {
      double& v = params[k]->value.data[i];
      const double orig = v;
      v = orig + step;
      const double up = loss(in);
      v = orig - step;
      const double down = loss(in);
      v = orig;
      r.param_error = std::max(r.param_error, gradcheck::rel_error(analytic[k][i], (up - down) / (2 * step)));
    }
  }
  Signal probe = in;
  const std::size_t channels = in.value.shape.back();
  for (std::size_t i = 0; i < in.value.size(); ++i) {
    if (in.value.rank() == 3 && !in.mask.empty() && !in.mask[i / channels]) continue;
    probe.value.data[i] = in.value.data[i] + step;
    const double up = loss(probe);
    probe.value.data[i] = in.value.data[i] - step;
    const double down = loss(probe);
    probe.value.data[i] = in.value.data[i];
    r.input_error = std::max(r.input_error, gradcheck::rel_error(dx.data[i], (up - down) / (2 * step)));
  }
  return r;
}

Mask tail_mask(std::size_t batch, std::size_t steps, const std::vector<std::size_t>& valid) {
  Mask m(batch * steps, 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < valid[b]; ++t) m[b * steps + t] = 1;
  return m;
}

const RunContext kTrain{true, 5};
const RunContext kInfer{false, 0};

}  // namespace

// ------------------------------------------------------------------ dense

TEST(Dense, CountIdentityAndGradients) {
  Dense d("dense", 8, 1);
  EXPECT_EQ(d.parameter_count(), 9u);

  Dense eye("eye", 3, 3);
  eye.kernel().value.fill(0.0);
  for (std::size_t i = 0; i < 3; ++i) eye.kernel().value.data[i * 3 + i] = 1.0;
  eye.bias().value.fill(0.0);
  const Tensor x = random_tensor({4, 3}, 1);
  EXPECT_EQ(eye.forward({x, {}}, kInfer).value, x);

  Dense g("g", 5, 3);
  randomize(g, 2);
  const auto r = check_layer(g, {random_tensor({4, 5}, 3), {}}, kTrain, 1e-4);
  EXPECT_LT(r.param_error, 1e-5);
  EXPECT_LT(r.input_error, 1e-5);

  EXPECT_THROW(g.forward({random_tensor({4, 6}, 3), {}}, kInfer), Error);
}

// ------------------------------------------------------------------- conv

TEST(Conv1D, UnitKernelIsIdentity) {
  Conv1D c("c", 1, 1, 1);
  c.kernel().value.fill(1.0);
  const Tensor x = random_tensor({2, 7, 1}, 4);
  EXPECT_EQ(c.forward({x, {}}, kInfer).value, x);
}

TEST(Conv1D, SamePaddingShape) {
  Conv1D c("c", 2, 128, 8);
  const Tensor y = c.forward({random_tensor({1, 100, 2}, 5), {}}, kInfer).value;
  EXPECT_EQ(y.shape, (std::vector<std::size_t>{1, 100, 128}));
  EXPECT_EQ(c.parameter_count(), 8u * 2 * 128 + 128);
}

TEST(Conv1D, Gradients) {
  for (std::size_t k : {1u, 2u, 3u, 4u}) {
    Conv1D c("c", 3, 4, k);
    randomize(c, 6 + k);
    const auto r = check_layer(c, {random_tensor({2, 9, 3}, 7), tail_mask(2, 9, {9, 6})}, kTrain, 1e-4);
    EXPECT_LT(r.param_error, 1e-5) << k;
    EXPECT_LT(r.input_error, 1e-5) << k;
  }
}

// ------------------------------------------------------------- batch norm

TEST(BatchNorm, TrainingStatisticsAndInference) {
  BatchNorm bn("bn", 3);
  Tensor x = random_tensor({6, 5, 3}, 8, 2.0);
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += static_cast<double>(i % 3) * 4.0;
  const Tensor y = bn.forward({x, {}}, kTrain).value;
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    const std::size_t n = x.size() / 3;
    for (std::size_t i = c; i < y.size(); i += 3) m += y.data[i];
    m /= n;
    for (std::size_t i = c; i < y.size(); i += 3) v += (y.data[i] - m) * (y.data[i] - m);
    v /= n;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);  // ε = 1e-5 shrinks the variance by ~ε/σ²
  }
  // Running statistics start at (0, 1) and move by 1 - momentum per step.
  EXPECT_NEAR(bn.running_mean().value.data[1], 0.01 * 4.0, 0.01);

  // Inference uses the stored statistics.
  bn.running_mean().value.fill(1.0);
  bn.running_var().value.fill(4.0);
  const Tensor z = bn.forward({x, {}}, kInfer).value;
  EXPECT_NEAR(z.data[0], (x.data[0] - 1.0) / std::sqrt(4.0 + 1e-5), 1e-12);
}

TEST(BatchNorm, StandardizedBatchPassesThrough) {
  BatchNorm bn("bn", 1);
  Tensor x({4, 1});
  x.data = {-1.0, 1.0, -1.0, 1.0};  // mean 0, population variance 1
  const Tensor y = bn.forward({x, {}}, kTrain).value;
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.data[i], x.data[i], 1e-5);
}

TEST(BatchNorm, GradientsWithMask) {
  BatchNorm bn("bn", 2);
  randomize(bn, 9);
  const auto r = check_layer(bn, {random_tensor({3, 6, 2}, 10), tail_mask(3, 6, {6, 4, 2})}, kTrain, 1e-5);
  EXPECT_LT(r.param_error, 1e-4);
  EXPECT_LT(r.input_error, 1e-4);
}

TEST(BatchNorm, SingleSampleBatchIsDegenerate) {
  BatchNorm bn("bn", 2);
  try {
    bn.forward({random_tensor({1, 2}, 1), {}}, kTrain);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateBatch);
  }
}

// -------------------------------------------------------------------- GRU

TEST(GRU, ParameterCounts) {
  EXPECT_EQ(GRU("a", {2, 20}).parameter_count(), 1440u);
  EXPECT_EQ(GRU("b", {20, 16}).parameter_count(), 1824u);
  EXPECT_EQ(GRU("c", {16, 8}).parameter_count(), 624u);
  EXPECT_EQ(GRU("d", {1, 1}).parameter_count(), 12u);
  EXPECT_EQ(GRU::count(1, 1), 12u);
}

TEST(GRU, AllMaskedSequenceKeepsInitialState) {
  GRU g("g", {2, 4});
  randomize(g, 11);
  const Tensor y = g.forward({random_tensor({2, 5, 2}, 12), Mask(10, 0)}, kInfer).value;
  ASSERT_EQ(y.shape, (std::vector<std::size_t>{2, 4}));
  for (double v : y.data) EXPECT_EQ(v, 0.0);
}

TEST(GRU, Gradients) {
  for (bool seq : {false, true}) {
    for (bool rev : {false, true}) {
      RecurrentOptions o{3, 4, seq, rev};
      GRU g("g", o);
      randomize(g, 13);
      const auto r = check_layer(g, {random_tensor({3, 7, 3}, 14), tail_mask(3, 7, {7, 5, 1})}, kTrain, 1e-5);
      EXPECT_LT(r.param_error, 1e-4) << seq << rev;
      EXPECT_LT(r.input_error, 1e-4) << seq << rev;
    }
  }
}

// ------------------------------------------------------------------- LSTM

TEST(LSTM, CountAndForgetBias) {
  LSTM l("l", {2, 20});
  EXPECT_EQ(l.parameter_count(), 1840u);
  EXPECT_EQ(LSTM::count(2, 20), 1840u);
  for (std::size_t j = 0; j < 20; ++j) {
    EXPECT_EQ(l.bias().value.data[j], 0.0);
    EXPECT_EQ(l.bias().value.data[20 + j], 1.0);
  }
}

TEST(LSTM, ZeroInputZeroStateGivesZero) {
  LSTM l("l", {3, 5, true});
  randomize(l, 15);
  l.bias().value.fill(0.0);
  const Tensor y = l.forward({Tensor({2, 4, 3}), {}}, kInfer).value;
  for (double v : y.data) EXPECT_EQ(v, 0.0);
}

TEST(LSTM, GradientsThroughTenSteps) {
  for (bool seq : {false, true}) {
    LSTM l("l", {2, 4, seq});
    randomize(l, 16);
    const auto r = check_layer(l, {random_tensor({2, 10, 2}, 17), tail_mask(2, 10, {10, 7})}, kTrain, 1e-5);
    EXPECT_LT(r.param_error, 1e-4);
    EXPECT_LT(r.input_error, 1e-4);
  }
}

// ---------------------------------------------------------- bidirectional

namespace {
std::unique_ptr<Bidirectional> make_bigru(std::size_t in, std::size_t units, bool seq) {
  RecurrentOptions f{in, units, seq, false};
  RecurrentOptions b = f;
  b.reverse = true;
  return std::make_unique<Bidirectional>("bi", std::make_unique<GRU>("bi/forward", f),
                                         std::make_unique<GRU>("bi/backward", b), units);
}
}  // namespace

TEST(Bidirectional, PalindromeWithSharedWeightsIsSymmetric) {
  auto bi = make_bigru(2, 3, false);
  std::vector<Parameter*> params;
  bi->collect_parameters(params);
  ASSERT_EQ(params.size(), 8u);
  randomize(*bi, 18);
  for (std::size_t k = 0; k < 4; ++k) params[4 + k]->value = params[k]->value;
  Tensor x({1, 5, 2});
  const double seq[5][2] = {{0.1, 0.5}, {-0.3, 0.2}, {0.7, -0.4}, {-0.3, 0.2}, {0.1, 0.5}};
  for (int t = 0; t < 5; ++t)
    for (int c = 0; c < 2; ++c) x.data[t * 2 + c] = seq[t][c];
  const Tensor y = bi->forward({x, {}}, kInfer).value;
  ASSERT_EQ(y.shape, (std::vector<std::size_t>{1, 6}));
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(y.data[j], y.data[3 + j], 1e-15);
  EXPECT_EQ(bi->parameter_count(), 2 * GRU::count(2, 3));
}

TEST(Bidirectional, Gradients) {
  for (bool seq : {false, true}) {
    auto bi = make_bigru(2, 3, seq);
    randomize(*bi, 19);
    const auto r = check_layer(*bi, {random_tensor({2, 6, 2}, 20), tail_mask(2, 6, {6, 3})}, kTrain, 1e-5);
    EXPECT_LT(r.param_error, 1e-4);
    EXPECT_LT(r.input_error, 1e-4);
  }
}

TEST(Recurrent, PaddingChangesNothing) {
  // Same sequences with and without a masked tail: outputs and gradients agree.
  for (int kind = 0; kind < 3; ++kind) {
    auto make = [&]() -> LayerPtr {
      if (kind == 0) return std::make_unique<GRU>("r", RecurrentOptions{2, 3});
      if (kind == 1) return std::make_unique<LSTM>("r", RecurrentOptions{2, 3});
      return make_bigru(2, 3, false);
    };
    LayerPtr a = make(), b = make();
    randomize(*a, 21);
    randomize(*b, 21);
    const Tensor x = random_tensor({1, 6, 2}, 22);
    Tensor padded({1, 10, 2}, -1.0);
    std::copy(x.data.begin(), x.data.end(), padded.data.begin());
    const Tensor ya = a->forward({x, {}}, kInfer).value;
    const Tensor yb = b->forward({padded, tail_mask(1, 10, {6})}, kInfer).value;
    ASSERT_EQ(ya.shape, yb.shape);
    for (std::size_t i = 0; i < ya.size(); ++i) EXPECT_NEAR(ya.data[i], yb.data[i], 1e-9);

    Tensor g(ya.shape, 1.0);
    a->forward({x, {}}, kTrain);
    const Tensor da = a->backward(g);
    b->forward({padded, tail_mask(1, 10, {6})}, kTrain);
    const Tensor db = b->backward(g);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(da.data[i], db.data[i], 1e-9);
    std::vector<Parameter*> pa, pb;
    a->collect_parameters(pa);
    b->collect_parameters(pb);
    for (std::size_t k = 0; k < pa.size(); ++k)
      for (std::size_t i = 0; i < pa[k]->grad.size(); ++i)
        EXPECT_NEAR(pa[k]->grad.data[i], pb[k]->grad.data[i], 1e-9);
  }
}

// ---------------------------------------------------------------- dropout

TEST(Dropout, IdentityCasesAndStatistics) {
  const Tensor x = random_tensor({200, 50, 2}, 23);
  Dropout none("d0", 0.0, 1);
  EXPECT_EQ(none.forward({x, {}}, kTrain).value, x);
  Dropout half("d", 0.5, 1);
  EXPECT_EQ(half.forward({x, {}}, kInfer).value, x);

  const Tensor y = half.forward({x, {}}, kTrain).value;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y.data[i] != 0.0) {
      ++kept;
      EXPECT_DOUBLE_EQ(y.data[i], 2.0 * x.data[i]);
    }
  }
  EXPECT_NEAR(static_cast<double>(kept) / x.size(), 0.5, 0.02);
  // Same seed, same mask.
  EXPECT_EQ(half.forward({x, {}}, kTrain).value, y);

  for (double bad : {-0.1, 1.0, 1.5}) {
    try {
      Dropout d("bad", bad, 0);
      d.forward({x, {}}, kTrain);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidRate);
    }
  }
}

TEST(Dropout, GradientMatchesMask) {
  Dropout d("d", 0.3, 4);
  const auto r = check_layer(d, {random_tensor({3, 4, 2}, 24), {}}, kTrain, 1e-5);
  EXPECT_LT(r.input_error, 1e-9);
}

// ---------------------------------------------------------------- pooling

TEST(Pooling, GlobalAverage) {
  GlobalAveragePool gap("gap");
  const Tensor c({2, 5, 3}, 0.7);
  for (double v : gap.forward({c, {}}, kInfer).value.data) EXPECT_DOUBLE_EQ(v, 0.7);

  const Tensor x = random_tensor({1, 4, 2}, 25);
  Tensor padded({1, 9, 2}, -1.0);
  std::copy(x.data.begin(), x.data.end(), padded.data.begin());
  const Tensor a = gap.forward({x, {}}, kInfer).value;
  const Tensor b = gap.forward({padded, tail_mask(1, 9, {4})}, kInfer).value;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-15);

  const auto r = check_layer(gap, {random_tensor({2, 5, 3}, 26), tail_mask(2, 5, {5, 2})}, kTrain, 1e-5);
  EXPECT_LT(r.input_error, 1e-8);
}

TEST(Pooling, MaxPool) {
  MaxPool1D pool("p", 2, 2, false);
  Tensor x({1, 4, 1});
  x.data = {1, 3, 2, 5};
  const Tensor y = pool.forward({x, {}}, kInfer).value;
  EXPECT_EQ(y.shape, (std::vector<std::size_t>{1, 2, 1}));
  EXPECT_EQ(y.data, (std::vector<double>{3, 5}));
  EXPECT_EQ(MaxPool1D::output_length(100, 2), 50u);

  MaxPool1D centred("p3", 3, 1, true);
  const auto r = check_layer(centred, {random_tensor({2, 7, 2}, 27), tail_mask(2, 7, {7, 4})}, kTrain, 1e-6);
  EXPECT_LT(r.input_error, 1e-6);
}

// ------------------------------------------------------------------- loss

TEST(Loss, WeightedMse) {
  const std::vector<double> y{0.0, 0.0}, yhat{1.0, 0.0}, w{3.0, 1.0};
  EXPECT_DOUBLE_EQ(weighted_mse(yhat, y, w), 0.75);
  EXPECT_DOUBLE_EQ(weighted_mse(y, y, w), 0.0);

  const std::vector<double> a{1.0, -2.0, 0.5}, b{0.0, 1.0, 0.25}, ones(3, 1.0);
  EXPECT_NEAR(weighted_mse(a, b, ones), (1.0 + 9.0 + 0.0625) / 3.0, 1e-15);

  std::vector<double> grad;
  weighted_mse(yhat, y, w, &grad);
  EXPECT_DOUBLE_EQ(grad[0], 2.0 * 3.0 * 1.0 / 4.0);
  EXPECT_DOUBLE_EQ(grad[1], 0.0);

  const std::vector<double> zero{0.0, 0.0};
  try {
    weighted_mse(yhat, y, zero);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveWeightSum);
  }
}

TEST(Loss, RegularizationPenalty) {
  Parameter p("p", {3});
  p.value.data = {2.0, 0.0, -1.0};
  EXPECT_DOUBLE_EQ(regularization_penalty({&p}, false), 0.0);
  p.l2 = 2e-6;
  Parameter single("s", {1});
  single.value.data = {2.0};
  single.l2 = 2e-6;
  EXPECT_DOUBLE_EQ(regularization_penalty({&single}, false), 8e-6);

  p.l2 = 0.0;
  p.l1 = 0.5;
  p.zero_grad();
  EXPECT_DOUBLE_EQ(regularization_penalty({&p}, true), 1.5);
  EXPECT_EQ(p.grad.data, (std::vector<double>{0.5, 0.0, -0.5}));
}

// ------------------------------------------------------------------- adam

TEST(Adam, ZeroGradientAndFirstStep) {
  Parameter p("p", {3});
  p.value.data = {1.0, -2.0, 0.5};
  Adam adam({&p});
  p.zero_grad();
  adam.step();
  EXPECT_EQ(p.value.data, (std::vector<double>{1.0, -2.0, 0.5}));

  Parameter q("q", {2});
  q.value.data = {0.0, 0.0};
  Adam adam2({&q});
  q.grad.data = {3.0, -1e-3};
  adam2.step();
  EXPECT_NEAR(q.value.data[0], -0.01, 1e-8);
  EXPECT_NEAR(q.value.data[1], 0.01, 1e-6);
  EXPECT_EQ(adam2.steps(), 1u);
}

TEST(Adam, QuadraticBowl) {
  Parameter p("p", {1});
  p.value.data = {1.0};
  Adam adam({&p});
  for (int i = 0; i < 200; ++i) {
    p.grad.data[0] = 2.0 * p.value.data[0];
    adam.step();
  }
  EXPECT_LT(std::abs(p.value.data[0]), 0.1);
}

// ---------------------------------------------------------------- network

TEST(Network, GlorotInitialisationIsSeeded) {
  auto build = [](std::uint64_t seed) {
    auto net = std::make_unique<Network>("n");
    net->root().add(std::make_unique<GRU>("gru", RecurrentOptions{2, 20}));
    net->root().add(std::make_unique<Dense>("dense", 20, 1));
    net->initialize(seed);
    return net;
  };
  auto a = build(1), b = build(1), c = build(2);
  EXPECT_EQ(a->values(), b->values());
  EXPECT_NE(a->values(), c->values());
  // Glorot bound for the GRU kernel: sqrt(6 / (2 + 60)).
  const double limit = std::sqrt(6.0 / 62.0);
  for (double v : a->parameters()[0]->value.data) EXPECT_LE(std::abs(v), limit);
  const auto counts = a->layer_counts();
  ASSERT_EQ(counts.size(), 2u);
  EXPECT_EQ(counts[0].parameters, 1440u);
  EXPECT_EQ(counts[1].parameters, 21u);
}

TEST(Network, InferenceIsPureAndShapeChecked) {
  Network net("n");
  net.root().add(std::make_unique<Conv1D>("conv", 2, 3, 3));
  net.root().add(std::make_unique<BatchNorm>("bn", 3));
  net.root().add(std::make_unique<GlobalAveragePool>("gap"));
  net.root().add(std::make_unique<Dense>("dense", 3, 1));
  net.initialize(3);
  const Tensor x = random_tensor({4, 8, 2}, 28);
  const auto state_before = net.values();
  const auto a = net.predict(x, {});
  const auto b = net.predict(x, {});
  EXPECT_EQ(a, b);
  EXPECT_EQ(net.values(), state_before);
  EXPECT_THROW(net.predict(random_tensor({4, 8}, 1), {}), Error);
  EXPECT_THROW(net.predict(x, Mask(3, 1)), Error);

  const auto r = gradcheck::check_network_gradients(net, x, tail_mask(4, 8, {8, 8, 5, 3}), kTrain);
  EXPECT_LT(r.max_param_error, 1e-4);
  EXPECT_LT(r.max_input_error, 1e-4);
}
