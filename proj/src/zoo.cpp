#include "fehforge/zoo.hpp"

#include <algorithm>
#include <cctype>

#include "binary_io.hpp"
#include "fehforge/config.hpp"
#include "fehforge/error.hpp"
#include "fehforge/recurrent.hpp"
#include "fehforge/rng.hpp"
#include "fehforge/table.hpp"

namespace fehforge::zoo {

using nn::LayerPtr;
using nn::Sequential;

namespace {

constexpr std::string_view kNames[] = {"FCN",  "ResNet", "InceptionTime", "LSTM",    "BiLSTM",
                                       "GRU",  "BiGRU",  "ConvLSTM",      "ConvGRU"};

constexpr double kReg = 2e-6;

bool uses_lstm(ModelKind k) {
  return k == ModelKind::LSTM || k == ModelKind::BiLSTM || k == ModelKind::ConvLSTM;
}
bool bidirectional(ModelKind k) { return k == ModelKind::BiLSTM || k == ModelKind::BiGRU; }

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::InvalidConfig, "model spec: " + what);
}

void validate(const ModelSpec& s) {
  require(s.input_channels > 0, "input_channels must be positive");
  auto positive = [](const std::vector<std::size_t>& v) {
    return !v.empty() && std::all_of(v.begin(), v.end(), [](std::size_t x) { return x > 0; });
  };
  switch (s.kind) {
    case ModelKind::FCN:
    case ModelKind::ConvLSTM:
    case ModelKind::ConvGRU:
      require(positive(s.conv_filters) && s.conv_filters.size() == s.conv_kernels.size() &&
                  positive(s.conv_kernels),
              "conv_filters and conv_kernels must be positive and of equal length");
      break;
    case ModelKind::ResNet:
      require(s.resnet_blocks > 0 && positive(s.resnet_filters) &&
                  s.resnet_filters.size() == s.conv_kernels.size() && positive(s.conv_kernels),
              "resnet needs blocks > 0 and one kernel per filter count");
      break;
    case ModelKind::InceptionTime:
      require(s.inception_blocks > 0 && s.inception_modules > 0 && s.inception_bottleneck > 0 &&
                  s.inception_filters > 0 && positive(s.inception_kernels) && s.inception_pool > 0,
              "inception sizes must be positive");
      break;
    default:
      break;
  }
  if (is_recurrent(s.kind)) {
    require(positive(s.units) && s.units.size() == s.dropout.size(),
            "units must be positive with one dropout rate per recurrent block");
    if (s.kind == ModelKind::ConvLSTM || s.kind == ModelKind::ConvGRU)
      require(s.pool_window > 0 && s.pool_stride > 0, "pooling sizes must be positive");
  }
  require(s.bn_epsilon > 0.0 && s.bn_momentum >= 0.0 && s.bn_momentum < 1.0,
          "batch-norm momentum must lie in [0, 1) and epsilon be positive");
}

LayerPtr conv_block(const std::string& prefix, std::size_t in, std::size_t filters, std::size_t kernel,
                    const ModelSpec& s) {
  auto block = std::make_unique<Sequential>(prefix);
  block->add(std::make_unique<nn::Conv1D>(prefix + "/conv", in, filters, kernel));
  block->add(std::make_unique<nn::BatchNorm>(prefix + "/bn", filters, s.bn_momentum, s.bn_epsilon));
  block->add(std::make_unique<nn::ReLU>(prefix + "/relu"));
  return block;
}

/// Appends the conv -> BN -> ReLU units of the FCN stack; returns the output channels.
std::size_t add_conv_stack(Sequential& root, const ModelSpec& s) {
  std::size_t in = s.input_channels;
  for (std::size_t i = 0; i < s.conv_filters.size(); ++i) {
    root.add(conv_block("conv_block_" + std::to_string(i + 1), in, s.conv_filters[i],
                        s.conv_kernels[i], s));
    in = s.conv_filters[i];
  }
  return in;
}

/// 1x1 convolution + batch norm used when a residual shortcut must change channel count.
std::unique_ptr<Sequential> projection(const std::string& prefix, std::size_t in, std::size_t out,
                                       const ModelSpec& s) {
  auto seq = std::make_unique<Sequential>(prefix);
  seq->add(std::make_unique<nn::Conv1D>(prefix + "/conv", in, out, 1, false));
  seq->add(std::make_unique<nn::BatchNorm>(prefix + "/bn", out, s.bn_momentum, s.bn_epsilon));
  return seq;
}

LayerPtr recurrent_layer(ModelKind kind, const std::string& name, const nn::RecurrentOptions& o) {
  if (uses_lstm(kind)) return std::make_unique<nn::LSTM>(name, o);
  return std::make_unique<nn::GRU>(name, o);
}

/// Appends the recurrent blocks (layer then dropout) for `in` input channels.
void add_recurrent_stack(Sequential& root, const ModelSpec& s, std::size_t in,
                         std::uint64_t& dropout_stream) {
  const std::string base = uses_lstm(s.kind) ? "lstm" : "gru";
  const bool bi = bidirectional(s.kind);
  for (std::size_t i = 0; i < s.units.size(); ++i) {
    nn::RecurrentOptions o;
    o.input_dim = in;
    o.units = s.units[i];
    o.return_sequences = i + 1 < s.units.size();
    o.kernel_l1 = s.regularizers.kernel_l1;
    o.kernel_l2 = s.regularizers.kernel_l2;
    o.recurrent_l1 = s.regularizers.recurrent_l1;
    o.recurrent_l2 = s.regularizers.recurrent_l2;
    const std::string name = (bi ? "bi" + base : base) + "_" + std::to_string(i + 1);
    if (bi) {
      nn::RecurrentOptions back = o;
      back.reverse = true;
      root.add(std::make_unique<nn::Bidirectional>(name, recurrent_layer(s.kind, name + "/forward", o),
                                                   recurrent_layer(s.kind, name + "/backward", back),
                                                   o.units));
      in = 2 * o.units;
    } else {
      root.add(recurrent_layer(s.kind, name, o));
      in = o.units;
    }
    root.add(std::make_unique<nn::Dropout>("dropout_" + std::to_string(i + 1), s.dropout[i],
                                           dropout_stream++));
  }
  root.add(std::make_unique<nn::Dense>("dense", in, 1));
}

void add_head(Sequential& root, std::size_t channels) {
  root.add(std::make_unique<nn::GlobalAveragePool>("gap"));
  root.add(std::make_unique<nn::Dense>("dense", channels, 1));
}

nlohmann::json regularizers_json(const Regularizers& r) {
  return {{"kernel_l1", r.kernel_l1},
          {"kernel_l2", r.kernel_l2},
          {"recurrent_l1", r.recurrent_l1},
          {"recurrent_l2", r.recurrent_l2}};
}

}  // namespace

std::string_view to_string(ModelKind kind) noexcept { return kNames[static_cast<int>(kind)]; }

ModelKind parse_model_kind(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
  };
  const std::string wanted = lower(name);
  for (ModelKind k : kAllModels)
    if (lower(to_string(k)) == wanted) return k;
  if (wanted == "inception") return ModelKind::InceptionTime;
  fail(ErrorCode::InvalidConfig, "unknown model kind '" + std::string(name) + "'");
}

bool is_recurrent(ModelKind kind) noexcept {
  return kind != ModelKind::FCN && kind != ModelKind::ResNet && kind != ModelKind::InceptionTime;
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json j;
  j["version"] = kVersion;
  j["kind"] = std::string(zoo::to_string(kind));
  j["input_channels"] = input_channels;
  j["input_length"] = input_length;
  j["conv_filters"] = conv_filters;
  j["conv_kernels"] = conv_kernels;
  j["resnet_blocks"] = resnet_blocks;
  j["resnet_filters"] = resnet_filters;
  j["inception_blocks"] = inception_blocks;
  j["inception_modules"] = inception_modules;
  j["inception_bottleneck"] = inception_bottleneck;
  j["inception_filters"] = inception_filters;
  j["inception_kernels"] = inception_kernels;
  j["inception_pool"] = inception_pool;
  j["units"] = units;
  j["dropout"] = dropout;
  j["regularizers"] = regularizers_json(regularizers);
  j["pool_window"] = pool_window;
  j["pool_stride"] = pool_stride;
  j["bn_momentum"] = bn_momentum;
  j["bn_epsilon"] = bn_epsilon;
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  check_keys(j, {"version", "kind", "input_channels", "input_length", "conv_filters", "conv_kernels",
                 "resnet_blocks", "resnet_filters", "inception_blocks", "inception_modules",
                 "inception_bottleneck", "inception_filters", "inception_kernels", "inception_pool",
                 "units", "dropout", "regularizers", "pool_window", "pool_stride", "bn_momentum",
                 "bn_epsilon"},
             "model");
  int version = kVersion;
  read_key(j, "version", version);
  if (version != kVersion)
    fail(ErrorCode::InvalidConfig, "model spec version " + std::to_string(version) + " is not supported");
  std::string kind_name;
  read_key(j, "kind", kind_name);
  if (kind_name.empty()) fail(ErrorCode::InvalidConfig, "model spec needs a 'kind'");
  ModelSpec s = default_spec(parse_model_kind(kind_name));
  read_key(j, "input_channels", s.input_channels);
  read_key(j, "input_length", s.input_length);
  read_key(j, "conv_filters", s.conv_filters);
  read_key(j, "conv_kernels", s.conv_kernels);
  read_key(j, "resnet_blocks", s.resnet_blocks);
  read_key(j, "resnet_filters", s.resnet_filters);
  read_key(j, "inception_blocks", s.inception_blocks);
  read_key(j, "inception_modules", s.inception_modules);
  read_key(j, "inception_bottleneck", s.inception_bottleneck);
  read_key(j, "inception_filters", s.inception_filters);
  read_key(j, "inception_kernels", s.inception_kernels);
  read_key(j, "inception_pool", s.inception_pool);
  read_key(j, "units", s.units);
  read_key(j, "dropout", s.dropout);
  if (const auto it = j.find("regularizers"); it != j.end()) {
    check_keys(*it, {"kernel_l1", "kernel_l2", "recurrent_l1", "recurrent_l2"}, "model.regularizers");
    read_key(*it, "kernel_l1", s.regularizers.kernel_l1);
    read_key(*it, "kernel_l2", s.regularizers.kernel_l2);
    read_key(*it, "recurrent_l1", s.regularizers.recurrent_l1);
    read_key(*it, "recurrent_l2", s.regularizers.recurrent_l2);
  }
  read_key(j, "pool_window", s.pool_window);
  read_key(j, "pool_stride", s.pool_stride);
  read_key(j, "bn_momentum", s.bn_momentum);
  read_key(j, "bn_epsilon", s.bn_epsilon);
  validate(s);
  return s;
}

std::uint64_t ModelSpec::hash() const { return fnv1a(to_json().dump()); }

ModelSpec build_fcn() {
  ModelSpec s;
  s.kind = ModelKind::FCN;
  return s;
}

ModelSpec build_resnet() {
  ModelSpec s;
  s.kind = ModelKind::ResNet;
  return s;
}

ModelSpec build_inception_time() {
  ModelSpec s;
  s.kind = ModelKind::InceptionTime;
  return s;
}

ModelSpec build_rnn(ModelKind kind) {
  if (!is_recurrent(kind) || kind == ModelKind::ConvLSTM || kind == ModelKind::ConvGRU)
    fail(ErrorCode::InvalidConfig, "build_rnn expects LSTM, BiLSTM, GRU or BiGRU");
  ModelSpec s;
  s.kind = kind;
  if (bidirectional(kind))
    s.regularizers = {kReg, 0.0, kReg, 0.0};
  else
    s.regularizers = {0.0, kReg, kReg, 0.0};
  return s;
}

ModelSpec build_conv_rnn(ModelKind kind) {
  if (kind != ModelKind::ConvLSTM && kind != ModelKind::ConvGRU)
    fail(ErrorCode::InvalidConfig, "build_conv_rnn expects ConvLSTM or ConvGRU");
  ModelSpec s;
  s.kind = kind;
  s.units = {20, 16};
  s.dropout = {0.2, 0.1};
  s.regularizers = {0.0, kReg, kReg, 0.0};
  return s;
}

ModelSpec default_spec(ModelKind kind) {
  switch (kind) {
    case ModelKind::FCN: return build_fcn();
    case ModelKind::ResNet: return build_resnet();
    case ModelKind::InceptionTime: return build_inception_time();
    case ModelKind::ConvLSTM:
    case ModelKind::ConvGRU: return build_conv_rnn(kind);
    default: return build_rnn(kind);
  }
}

ModelSpec tiny_spec(ModelKind kind) {
  ModelSpec s = default_spec(kind);
  s.input_length = 16;
  s.conv_filters = {4, 8, 4};
  s.resnet_blocks = 2;
  s.resnet_filters = {4, 4, 4};
  s.inception_blocks = 1;
  s.inception_modules = 2;
  s.inception_bottleneck = 2;
  s.inception_filters = 2;
  s.inception_kernels = {3, 5, 8};
  s.units = s.units.size() == 3 ? std::vector<std::size_t>{5, 4, 3} : std::vector<std::size_t>{5, 4};
  return s;
}

void set_dropout(ModelSpec& spec, double rate) {
  for (double& d : spec.dropout) d = rate;
}

std::unique_ptr<nn::Network> instantiate(const ModelSpec& s, std::uint64_t seed) {
  validate(s);
  auto net = std::make_unique<nn::Network>(std::string(to_string(s.kind)));
  Sequential& root = net->root();
  std::uint64_t dropout_stream = 1;

  switch (s.kind) {
    case ModelKind::FCN:
      add_head(root, add_conv_stack(root, s));
      break;

    case ModelKind::ResNet: {
      std::size_t in = s.input_channels;
      for (std::size_t b = 0; b < s.resnet_blocks; ++b) {
        const std::string prefix = "residual_block_" + std::to_string(b + 1);
        auto main = std::make_unique<Sequential>(prefix + "/main");
        std::size_t c = in;
        for (std::size_t u = 0; u < s.resnet_filters.size(); ++u) {
          main->add(conv_block(prefix + "/unit_" + std::to_string(u + 1), c, s.resnet_filters[u],
                               s.conv_kernels[u], s));
          c = s.resnet_filters[u];
        }
        auto shortcut = c != in ? projection(prefix + "/shortcut", in, c, s) : nullptr;
        root.add(std::make_unique<nn::Residual>(prefix, std::move(main), std::move(shortcut)));
        in = c;
      }
      add_head(root, in);
      break;
    }

    case ModelKind::InceptionTime: {
      std::size_t in = s.input_channels;
      const std::size_t out = (s.inception_kernels.size() + 1) * s.inception_filters;
      for (std::size_t b = 0; b < s.inception_blocks; ++b) {
        const std::string prefix = "inception_block_" + std::to_string(b + 1);
        auto main = std::make_unique<Sequential>(prefix + "/main");
        std::size_t c = in;
        for (std::size_t m = 0; m < s.inception_modules; ++m) {
          main->add(std::make_unique<nn::InceptionModule>(
              prefix + "/module_" + std::to_string(m + 1), c, s.inception_bottleneck, s.inception_filters,
              s.inception_kernels, s.inception_pool, s.bn_momentum, s.bn_epsilon));
          c = out;
        }
        root.add(std::make_unique<nn::Residual>(prefix, std::move(main),
                                                projection(prefix + "/shortcut", in, out, s)));
        in = out;
      }
      add_head(root, in);
      break;
    }

    case ModelKind::ConvLSTM:
    case ModelKind::ConvGRU: {
      const std::size_t c = add_conv_stack(root, s);
      root.add(std::make_unique<nn::MaxPool1D>("max_pool", s.pool_window, s.pool_stride, false));
      add_recurrent_stack(root, s, c, dropout_stream);
      break;
    }

    default:
      add_recurrent_stack(root, s, s.input_channels, dropout_stream);
      break;
  }
  net->initialize(seed);
  return net;
}

// ------------------------------------------------------------------------- snapshots

namespace {
constexpr std::string_view kSnapshotMagic = "FEHSNAP1";
constexpr std::uint32_t kSnapshotVersion = 1;
}  // namespace

Snapshot Snapshot::capture(const ModelSpec& spec, nn::Network& network) {
  Snapshot snap{spec, {}};
  for (nn::Parameter* p : network.parameters()) snap.arrays.emplace_back(p->name, p->value);
  for (nn::StateArray* st : network.state()) snap.arrays.emplace_back(st->name, st->value);
  return snap;
}

std::unique_ptr<nn::Network> Snapshot::restore() const {
  auto net = instantiate(spec, 0);
  std::vector<nn::Tensor> values;
  auto params = net->parameters();
  auto states = net->state();
  if (arrays.size() != params.size() + states.size())
    fail(ErrorCode::IntegrityError, "snapshot holds " + std::to_string(arrays.size()) +
                                        " arrays, the model expects " +
                                        std::to_string(params.size() + states.size()));
  std::size_t k = 0;
  auto check = [&](const std::string& name, const nn::Tensor& t) {
    if (arrays[k].first != name || !arrays[k].second.same_shape(t))
      fail(ErrorCode::IntegrityError, "snapshot array '" + arrays[k].first + "' does not match '" + name + "'");
    values.push_back(arrays[k].second);
    ++k;
  };
  for (nn::Parameter* p : params) check(p->name, p->value);
  for (nn::StateArray* st : states) check(st->name, st->value);
  net->set_values(values);
  return net;
}

std::string encode_snapshot(const Snapshot& snapshot) {
  detail::ByteWriter w;
  w.bytes(kSnapshotMagic);
  w.u32(kSnapshotVersion);
  w.u64(snapshot.spec.hash());
  w.str(snapshot.spec.to_json().dump());
  w.u32(static_cast<std::uint32_t>(snapshot.arrays.size()));
  for (const auto& [name, t] : snapshot.arrays) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) w.u64(d);
    for (double v : t.data) w.f64(v);
  }
  return w.take();
}

Snapshot decode_snapshot(std::string_view bytes, const ModelSpec* expected) {
  detail::ByteReader r(bytes);
  if (r.bytes(kSnapshotMagic.size()) != kSnapshotMagic) fail(ErrorCode::FormatError, "not a snapshot file");
  if (const auto v = r.u32(); v != kSnapshotVersion)
    fail(ErrorCode::FormatError, "unsupported snapshot version " + std::to_string(v));
  const std::uint64_t stored_hash = r.u64();
  const std::string spec_text = r.str();
  // The hash is over the serialised spec, so a tampered spec is caught before parsing.
  if (fnv1a(spec_text) != stored_hash)
    fail(ErrorCode::IntegrityError, "snapshot spec hash " + hash_to_hex(stored_hash) +
                                        " does not match its spec " + hash_to_hex(fnv1a(spec_text)));
  nlohmann::json spec_json;
  try {
    spec_json = nlohmann::json::parse(spec_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, std::string("snapshot spec: ") + e.what());
  }
  Snapshot snap{ModelSpec::from_json(spec_json), {}};
  if (expected && expected->hash() != stored_hash)
    fail(ErrorCode::IntegrityError, "snapshot was trained for model spec " + hash_to_hex(stored_hash) +
                                        ", expected " + hash_to_hex(expected->hash()));
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    std::vector<std::size_t> shape(r.u32());
    for (auto& d : shape) d = r.u64();
    const std::size_t n = nn::Tensor::element_count(shape);
    if (n > bytes.size() / 8) fail(ErrorCode::FormatError, "snapshot array '" + name + "' is truncated");
    nn::Tensor t(std::move(shape));
    for (double& v : t.data) v = r.f64();
    snap.arrays.emplace_back(std::move(name), std::move(t));
  }
  if (!r.at_end()) fail(ErrorCode::FormatError, "trailing bytes after snapshot");
  return snap;
}

void save_snapshot(const std::filesystem::path& path, const Snapshot& snapshot) {
  write_file_atomic(path, encode_snapshot(snapshot));
}

Snapshot load_snapshot(const std::filesystem::path& path, const ModelSpec* expected) {
  return decode_snapshot(read_file(path), expected);
}

}  // namespace fehforge::zoo
