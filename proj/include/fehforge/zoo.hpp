#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fehforge/network.hpp"

namespace fehforge::zoo {

enum class ModelKind { FCN, ResNet, InceptionTime, LSTM, BiLSTM, GRU, BiGRU, ConvLSTM, ConvGRU };

inline constexpr ModelKind kAllModels[] = {ModelKind::FCN,    ModelKind::ResNet,  ModelKind::InceptionTime,
                                           ModelKind::LSTM,   ModelKind::BiLSTM,  ModelKind::GRU,
                                           ModelKind::BiGRU,  ModelKind::ConvLSTM, ModelKind::ConvGRU};

std::string_view to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view name);
bool is_recurrent(ModelKind kind) noexcept;

struct Regularizers {
  double kernel_l1 = 0.0, kernel_l2 = 0.0;
  double recurrent_l1 = 0.0, recurrent_l2 = 0.0;
  friend bool operator==(const Regularizers&, const Regularizers&) = default;
};

/// Architecture description. Only the fields relevant to `kind` are used; the rest keep
/// their defaults so that every spec serialises the same way.
struct ModelSpec {
  static constexpr int kVersion = 1;

  ModelKind kind = ModelKind::GRU;
  std::size_t input_channels = 2;
  /// Nominal sequence length; networks accept any length, this is recorded for reports.
  std::size_t input_length = 100;

  // Convolutional stack (FCN, ConvLSTM, ConvGRU).
  std::vector<std::size_t> conv_filters{128, 256, 128};
  std::vector<std::size_t> conv_kernels{8, 5, 3};

  // ResNet: `resnet_blocks` residual blocks of conv units with these filters and kernels.
  std::size_t resnet_blocks = 3;
  std::vector<std::size_t> resnet_filters{64, 64, 64};

  // InceptionTime.
  std::size_t inception_blocks = 2;
  std::size_t inception_modules = 3;
  std::size_t inception_bottleneck = 32;
  std::size_t inception_filters = 32;
  std::vector<std::size_t> inception_kernels{10, 20, 40};
  std::size_t inception_pool = 3;

  // Recurrent blocks; one dropout rate per block.
  std::vector<std::size_t> units{20, 16, 8};
  std::vector<double> dropout{0.2, 0.2, 0.1};
  Regularizers regularizers;

  // Pooling between the conv and recurrent stacks of the hybrid models.
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;

  double bn_momentum = 0.99;
  double bn_epsilon = 1e-5;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
  /// Hash of the canonical JSON form.
  std::uint64_t hash() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

ModelSpec build_fcn();
ModelSpec build_resnet();
ModelSpec build_inception_time();
/// kind ∈ {LSTM, BiLSTM, GRU, BiGRU}
ModelSpec build_rnn(ModelKind kind);
/// kind ∈ {ConvLSTM, ConvGRU}
ModelSpec build_conv_rnn(ModelKind kind);
ModelSpec default_spec(ModelKind kind);

/// A small configuration of the same topology (at most 8 units or filters per layer),
/// used by gradient checks and quick end-to-end runs.
ModelSpec tiny_spec(ModelKind kind);

/// Sets every dropout rate in the spec.
void set_dropout(ModelSpec& spec, double rate);

/// Builds the network and draws its initial parameters from `seed`.
std::unique_ptr<nn::Network> instantiate(const ModelSpec& spec, std::uint64_t seed);

/// Trained parameters bound to the spec that produced them.
struct Snapshot {
  ModelSpec spec;
  std::vector<std::pair<std::string, nn::Tensor>> arrays;  // parameters then state

  static Snapshot capture(const ModelSpec& spec, nn::Network& network);
  /// Rebuilds the network and loads the arrays.
  std::unique_ptr<nn::Network> restore() const;
};

/// Binary layout, little-endian:
///   "FEHSNAP1" | u32 version | u64 spec hash | str spec JSON | u32 array count
///   then per array: str name | u32 rank | u64[rank] dims | f64[...] values
/// where str is a u32 length followed by bytes.
std::string encode_snapshot(const Snapshot& snapshot);
/// Throws FormatError on malformed bytes and IntegrityError when the stored hash does not
/// match the stored spec or, if given, `expected`.
Snapshot decode_snapshot(std::string_view bytes, const ModelSpec* expected = nullptr);
void save_snapshot(const std::filesystem::path& path, const Snapshot& snapshot);
Snapshot load_snapshot(const std::filesystem::path& path, const ModelSpec* expected = nullptr);

}  // namespace fehforge::zoo
