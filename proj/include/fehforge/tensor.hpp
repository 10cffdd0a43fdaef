#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace fehforge::nn {

/// Dense row-major array of doubles. Sequences are (batch, timesteps, channels); flat
/// feature batches are (batch, features).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
      : shape(std::move(dims)), data(element_count(shape), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double* ptr() noexcept { return data.data(); }
  const double* ptr() const noexcept { return data.data(); }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool same_shape(const Tensor& o) const noexcept { return shape == o.shape; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Per-timestep validity, (batch, timesteps). Empty means every step is valid.
using Mask = std::vector<std::uint8_t>;

inline bool step_valid(const Mask& mask, std::size_t b, std::size_t t, std::size_t steps) noexcept {
  return mask.empty() || mask[b * steps + t] != 0;
}

// Small GEMM kernels over row-major storage; all accumulate into C.

/// C(m,n) += A(m,k) * B(k,n)
void gemm_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
              double* c) noexcept;
/// C(k,n) += A(m,k)^T * B(m,n)
void gemm_at_b_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                   double* c) noexcept;
/// C(m,k) += A(m,n) * B(k,n)^T
void gemm_a_bt_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                   double* c) noexcept;

}  // namespace fehforge::nn
