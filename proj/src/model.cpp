#include "foldmap/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include <Eigen/Core>
#include <json.hpp>

#include "foldmap/error.hpp"
#include "foldmap/rng.hpp"

namespace foldmap {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using json = nlohmann::json;

void im2col(const double* x, int channels, int side, int k, int stride, int out_side, double* cols) {
  const std::size_t p = std::size_t(out_side) * out_side;
  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = cols + (std::size_t(c * k + ki) * k + kj) * p;
        const double* plane = x + std::size_t(c) * side * side;
        for (int oy = 0; oy < out_side; ++oy) {
          const double* src = plane + std::size_t(oy * stride + ki) * side + kj;
          for (int ox = 0; ox < out_side; ++ox) row[oy * out_side + ox] = src[ox * stride];
        }
      }
    }
  }
}

void col2im(const double* cols, int channels, int side, int k, int stride, int out_side, double* x) {
  const std::size_t p = std::size_t(out_side) * out_side;
  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row = cols + (std::size_t(c * k + ki) * k + kj) * p;
        double* plane = x + std::size_t(c) * side * side;
        for (int oy = 0; oy < out_side; ++oy) {
          double* dst = plane + std::size_t(oy * stride + ki) * side + kj;
          for (int ox = 0; ox < out_side; ++ox) dst[ox * stride] += row[oy * out_side + ox];
        }
      }
    }
  }
}

// Per-channel statistics over the batch and spatial axes of an N x C x S tensor.
void channel_stats(const Tensor& z, std::vector<double>& mean, std::vector<double>& var) {
  const std::size_t spatial = std::size_t(z.h) * z.w;
  const double count = static_cast<double>(z.n) * static_cast<double>(spatial);
  mean.assign(z.c, 0.0);
  var.assign(z.c, 0.0);
  for (int c = 0; c < z.c; ++c) {
    double s = 0.0;
    for (int i = 0; i < z.n; ++i) {
      const double* p = z.sample(i) + c * spatial;
      for (std::size_t k = 0; k < spatial; ++k) s += p[k];
    }
    const double mu = s / count;
    double ss = 0.0;
    for (int i = 0; i < z.n; ++i) {
      const double* p = z.sample(i) + c * spatial;
      for (std::size_t k = 0; k < spatial; ++k) ss += (p[k] - mu) * (p[k] - mu);
    }
    mean[c] = mu;
    var[c] = ss / count;
  }
}

// Batch-norm backward for an N x C x S tensor using batch statistics.
void batch_norm_backward(const Tensor& z, const std::vector<double>& mean, const std::vector<double>& inv_std,
                         const std::vector<double>& gamma, const Tensor& da, std::vector<double>& dgamma,
                         std::vector<double>& dbeta, Tensor& dz) {
  const std::size_t spatial = std::size_t(z.h) * z.w;
  const double count = static_cast<double>(z.n) * static_cast<double>(spatial);
  dz = Tensor(z.n, z.c, z.h, z.w);
  for (int c = 0; c < z.c; ++c) {
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    double dg = 0.0;
    double db = 0.0;
    for (int i = 0; i < z.n; ++i) {
      const double* zp = z.sample(i) + c * spatial;
      const double* dp = da.sample(i) + c * spatial;
      for (std::size_t k = 0; k < spatial; ++k) {
        const double xhat = (zp[k] - mean[c]) * inv_std[c];
        dg += dp[k] * xhat;
        db += dp[k];
        sum_dxhat += dp[k] * gamma[c];
        sum_dxhat_xhat += dp[k] * gamma[c] * xhat;
      }
    }
    dgamma[c] += dg;
    dbeta[c] += db;
    const double scale = inv_std[c] / count;
    for (int i = 0; i < z.n; ++i) {
      const double* zp = z.sample(i) + c * spatial;
      const double* dp = da.sample(i) + c * spatial;
      double* out = dz.sample(i) + c * spatial;
      for (std::size_t k = 0; k < spatial; ++k) {
        const double xhat = (zp[k] - mean[c]) * inv_std[c];
        out[k] = scale * (count * dp[k] * gamma[c] - sum_dxhat - xhat * sum_dxhat_xhat);
      }
    }
  }
}

void softmax_rows(Tensor& t) {
  for (int i = 0; i < t.n; ++i) {
    double* row = t.sample(i);
    const std::size_t k = t.sample_size();
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (std::size_t j = 0; j < k; ++j) row[j] /= s;
  }
}

void check_labels(std::span<const LabelIndices> labels, const ModelConfig& cfg, std::size_t n) {
  if (labels.size() != n) {
    throw Error(ErrorKind::ShapeMismatch, std::to_string(labels.size()) + " labels for " + std::to_string(n) + " inputs");
  }
  for (const auto& l : labels) {
    for (Task t : kTasks) {
      const int idx = l[index_of(t)];
      if (idx < 0 || idx >= cfg.head_sizes[index_of(t)]) {
        throw Error(ErrorKind::IndexOutOfRange, "label index " + std::to_string(idx) + " for task " +
                                                    std::string(task_name(t)) + " outside head of size " +
                                                    std::to_string(cfg.head_sizes[index_of(t)]));
      }
    }
  }
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f32(std::vector<std::uint8_t>& out, double v) {
  const auto f = static_cast<float>(v);
  std::uint32_t bits = 0;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u(int width) {
    need(std::size_t(width));
    std::uint32_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += std::size_t(width);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u(4);
    float f = 0.0f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + pos_, bytes_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> rest() const { return bytes_.subspan(pos_); }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorKind::CorruptCheckpoint, "checkpoint truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::array<char, 8> kCheckpointMagic{'F', 'M', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ModelConfig ModelConfig::reference(std::array<int, kTaskCount> heads) {
  ModelConfig cfg;
  cfg.head_sizes = heads;
  return cfg;
}

ModelConfig ModelConfig::tiny(std::array<int, kTaskCount> heads) {
  ModelConfig cfg;
  cfg.conv_specs = {{4, 1, 4}, {4, 2, 8}, {4, 4, 8}, {4, 4, 16}, {4, 2, 16}};
  cfg.fc_dim = 32;
  cfg.pfp_dim = 16;
  cfg.bn_momentum = 0.9;
  cfg.head_sizes = heads;
  return cfg;
}

std::vector<int> ModelConfig::conv_output_sides() const {
  std::vector<int> sides;
  int side = input_side;
  for (const ConvSpec& s : conv_specs) {
    side = s.kernel > 0 && s.stride > 0 && side >= s.kernel ? (side - s.kernel) / s.stride + 1 : 0;
    sides.push_back(side);
  }
  return sides;
}

void ModelConfig::validate() const {
  const auto bad = [](const std::string& why) { throw Error(ErrorKind::BadConfig, why); };
  if (input_channels <= 0 || input_side <= 0) bad("input dimensions must be positive");
  if (conv_specs.empty()) bad("at least one conv layer is required");
  for (const ConvSpec& s : conv_specs) {
    if (s.kernel <= 0 || s.stride <= 0 || s.out_channels <= 0) bad("conv kernel, stride and channels must be positive");
  }
  for (int side : conv_output_sides()) {
    if (side <= 0) bad("conv stack shrinks the input below one pixel");
  }
  if (fc_dim <= 0 || pfp_dim <= 0) bad("dense widths must be positive");
  for (int h : head_sizes) {
    if (h <= 0) bad("head sizes must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) bad("dropout rate must lie in [0, 1)");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) bad("batch-norm momentum must lie in [0, 1)");
  if (!(bn_epsilon > 0.0)) bad("batch-norm epsilon must be positive");
}

std::string ModelConfig::to_json() const {
  json j;
  j["input_channels"] = input_channels;
  j["input_side"] = input_side;
  j["conv_specs"] = json::array();
  for (const ConvSpec& s : conv_specs) {
    j["conv_specs"].push_back(
        {{"kernel", s.kernel}, {"stride", s.stride}, {"out_channels", s.out_channels}, {"batch_norm", s.batch_norm}});
  }
  j["fc_dim"] = fc_dim;
  j["pfp_dim"] = pfp_dim;
  j["dropout_rate"] = dropout_rate;
  j["head_sizes"] = head_sizes;
  j["bn_momentum"] = bn_momentum;
  j["bn_epsilon"] = bn_epsilon;
  j["distance_only_input"] = distance_only_input;
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    ModelConfig cfg;
    cfg.input_channels = j.at("input_channels").get<int>();
    cfg.input_side = j.at("input_side").get<int>();
    cfg.conv_specs.clear();
    for (const auto& s : j.at("conv_specs")) {
      cfg.conv_specs.push_back({s.at("kernel").get<int>(), s.at("stride").get<int>(), s.at("out_channels").get<int>(),
                                s.value("batch_norm", true)});
    }
    cfg.fc_dim = j.at("fc_dim").get<int>();
    cfg.pfp_dim = j.at("pfp_dim").get<int>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    cfg.head_sizes = j.at("head_sizes").get<std::array<int, kTaskCount>>();
    cfg.bn_momentum = j.value("bn_momentum", 0.99);
    cfg.bn_epsilon = j.value("bn_epsilon", 1e-3);
    cfg.distance_only_input = j.value("distance_only_input", false);
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("model config: ") + e.what());
  }
}

void TrainConfig::validate() const {
  const auto bad = [](const std::string& why) { throw Error(ErrorKind::BadConfig, why); };
  if (max_epochs <= 0 || batch_size <= 0) bad("epochs and batch size must be positive");
  if (!(initial_lr > 0.0) || !(min_lr > 0.0) || min_lr > initial_lr) bad("need 0 < min_lr <= initial_lr");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) bad("lr_factor must lie in (0, 1)");
  if (plateau_patience <= 0) bad("plateau patience must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) bad("Adam betas in [0, 1)");
  if (!(adam_eps > 0.0)) bad("Adam epsilon must be positive");
}

std::string TrainConfig::to_json() const {
  json j;
  j["max_epochs"] = max_epochs;
  j["batch_size"] = batch_size;
  j["initial_lr"] = initial_lr;
  j["lr_factor"] = lr_factor;
  j["plateau_patience"] = plateau_patience;
  j["min_lr"] = min_lr;
  j["plateau_min_delta"] = plateau_min_delta;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["adam_eps"] = adam_eps;
  j["seed"] = seed;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Inputs

Tensor encode_inputs(std::span<const MapStack* const> stacks, const ModelConfig& cfg) {
  if (stacks.empty()) throw Error(ErrorKind::ShapeMismatch, "empty batch");
  if (cfg.input_channels != static_cast<int>(kChannelCount) || cfg.input_side != static_cast<int>(kMapSide)) {
    throw Error(ErrorKind::ShapeMismatch, "model input is not 3 x 255 x 255");
  }
  Tensor t(static_cast<int>(stacks.size()), static_cast<int>(kChannelCount), static_cast<int>(kMapSide),
           static_cast<int>(kMapSide));
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    const MapStack& s = *stacks[i];
    const bool dist_everywhere = s.distance_only || cfg.distance_only_input;
    double* dst = t.sample(static_cast<int>(i));
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      const Channel src = dist_everywhere ? Channel::Dist : static_cast<Channel>(c);
      const double scale = dist_everywhere || c < 2 ? 100.0 : static_cast<double>(kNbOutLimit);
      const auto values = s.channel(src);
      for (std::size_t k = 0; k < kChannelSize; ++k) dst[c * kChannelSize + k] = values[k] / scale;
    }
  }
  return t;
}

Tensor encode_inputs(std::span<const MapStack> stacks, const ModelConfig& cfg) {
  std::vector<const MapStack*> ptrs;
  ptrs.reserve(stacks.size());
  for (const auto& s : stacks) ptrs.push_back(&s);
  return encode_inputs(ptrs, cfg);
}

std::size_t Prediction::predicted(Task t) const {
  const auto& p = probabilities[index_of(t)];
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

double glorot_limit(int fan_in, int fan_out) { return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)); }

// ---------------------------------------------------------------------------
// Model construction

std::size_t Model::add_param(std::string name, std::vector<int> shape, bool trainable) {
  Param p;
  p.name = std::move(name);
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  p.shape = std::move(shape);
  p.value.assign(count, 0.0);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : config_(cfg) {
  cfg.validate();
  Rng rng(seed);
  const auto glorot = [&](std::size_t idx, int fan_in, int fan_out) {
    const double limit = glorot_limit(fan_in, fan_out);
    for (double& v : params_[idx].value) v = rng.uniform(-limit, limit);
  };

  int in_c = cfg.input_channels;
  int side = cfg.input_side;
  for (std::size_t l = 0; l < cfg.conv_specs.size(); ++l) {
    const ConvSpec& s = cfg.conv_specs[l];
    const std::string prefix = "conv" + std::to_string(l + 1) + ".";
    ConvLayer L{};
    L.in_c = in_c;
    L.out_c = s.out_channels;
    L.kernel = s.kernel;
    L.stride = s.stride;
    L.in_side = side;
    L.out_side = (side - s.kernel) / s.stride + 1;
    L.bn = s.batch_norm;
    L.w = add_param(prefix + "weight", {s.out_channels, in_c, s.kernel, s.kernel}, true);
    L.b = add_param(prefix + "bias", {s.out_channels}, true);
    glorot(L.w, in_c * s.kernel * s.kernel, s.out_channels * s.kernel * s.kernel);
    if (L.bn) {
      L.gamma = add_param(prefix + "bn.gamma", {s.out_channels}, true);
      L.beta = add_param(prefix + "bn.beta", {s.out_channels}, true);
      L.mean = add_param(prefix + "bn.running_mean", {s.out_channels}, false);
      L.var = add_param(prefix + "bn.running_var", {s.out_channels}, false);
      std::fill(params_[L.gamma].value.begin(), params_[L.gamma].value.end(), 1.0);
      std::fill(params_[L.var].value.begin(), params_[L.var].value.end(), 1.0);
    }
    convs_.push_back(L);
    in_c = s.out_channels;
    side = L.out_side;
  }

  fc_ = {in_c, cfg.fc_dim, add_param("fc.weight", {cfg.fc_dim, in_c}, true), add_param("fc.bias", {cfg.fc_dim}, true)};
  glorot(fc_.w, in_c, cfg.fc_dim);
  pfp_ = {cfg.fc_dim, cfg.pfp_dim, add_param("pfp.weight", {cfg.pfp_dim, cfg.fc_dim}, true),
          add_param("pfp.bias", {cfg.pfp_dim}, true)};
  glorot(pfp_.w, cfg.fc_dim, cfg.pfp_dim);
  pfp_gamma_ = add_param("pfp.bn.gamma", {cfg.pfp_dim}, true);
  pfp_beta_ = add_param("pfp.bn.beta", {cfg.pfp_dim}, true);
  pfp_mean_ = add_param("pfp.bn.running_mean", {cfg.pfp_dim}, false);
  pfp_var_ = add_param("pfp.bn.running_var", {cfg.pfp_dim}, false);
  std::fill(params_[pfp_gamma_].value.begin(), params_[pfp_gamma_].value.end(), 1.0);
  std::fill(params_[pfp_var_].value.begin(), params_[pfp_var_].value.end(), 1.0);

  for (Task t : kTasks) {
    const int k = cfg.head_sizes[index_of(t)];
    const std::string prefix = "head_" + std::string(task_name(t)) + ".";
    DenseLayer& h = heads_[index_of(t)];
    h = {cfg.pfp_dim, k, add_param(prefix + "weight", {k, cfg.pfp_dim}, true), add_param(prefix + "bias", {k}, true)};
    glorot(h.w, cfg.pfp_dim, k);
  }
}

const Param& Model::param(std::string_view name) const {
  for (const Param& p : params_) {
    if (p.name == name) return p;
  }
  throw Error(ErrorKind::BadConfig, "no parameter named '" + std::string(name) + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.trainable ? p.value.size() : 0;
  return n;
}

void Model::set_vocabulary(Vocabulary v) {
  for (Task t : kTasks) {
    if (v.size(t) > static_cast<std::size_t>(config_.head_sizes[index_of(t)])) {
      throw Error(ErrorKind::VocabularyMismatch, "vocabulary for task " + std::string(task_name(t)) + " has " +
                                                     std::to_string(v.size(t)) + " labels but the head has " +
                                                     std::to_string(config_.head_sizes[index_of(t)]));
    }
  }
  vocabulary_ = std::move(v);
}

// ---------------------------------------------------------------------------
// Forward

void Model::conv_forward(const ConvLayer& L, const Tensor& x, Tensor& z) const {
  z = Tensor(x.n, L.out_c, L.out_side, L.out_side);
  const int kk = L.in_c * L.kernel * L.kernel;
  const int p = L.out_side * L.out_side;
  const ConstMapMat w(params_[L.w].value.data(), L.out_c, kk);
  const std::vector<double>& bias = params_[L.b].value;
  RowMat cols(kk, p);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i), L.in_c, L.in_side, L.kernel, L.stride, L.out_side, cols.data());
    MapMat out(z.sample(i), L.out_c, p);
    out.noalias() = w * cols;
    for (int c = 0; c < L.out_c; ++c) out.row(c).array() += bias[c];
  }
}

void Model::dense_forward(const DenseLayer& L, const Tensor& x, Tensor& y) const {
  y = Tensor(x.n, L.out);
  const ConstMapMat in(x.data.data(), x.n, L.in);
  const ConstMapMat w(params_[L.w].value.data(), L.out, L.in);
  MapMat out(y.data.data(), x.n, L.out);
  const std::vector<double>& bias = params_[L.b].value;
  // Row by row so each sample's result does not depend on the batch size.
  for (int i = 0; i < x.n; ++i) {
    out.row(i).noalias() = (w * in.row(i).transpose()).transpose();
    for (int j = 0; j < L.out; ++j) out(i, j) += bias[j];
  }
}

ForwardCache Model::forward(const Tensor& input, Mode mode, std::uint64_t dropout_seed) const {
  if (input.n <= 0) throw Error(ErrorKind::ShapeMismatch, "empty batch");
  if (input.c != config_.input_channels || input.h != config_.input_side || input.w != config_.input_side) {
    throw Error(ErrorKind::ShapeMismatch, "input " + std::to_string(input.c) + "x" + std::to_string(input.h) + "x" +
                                              std::to_string(input.w) + " does not match the model");
  }
  ForwardCache cache;
  cache.mode = mode;
  const std::size_t layers = convs_.size();
  cache.conv_z.resize(layers);
  cache.conv_y.resize(layers + 1);
  cache.conv_mean.resize(layers);
  cache.conv_inv_std.resize(layers);
  cache.conv_var.resize(layers);
  cache.conv_y[0] = input;

  for (std::size_t l = 0; l < layers; ++l) {
    const ConvLayer& L = convs_[l];
    Tensor& z = cache.conv_z[l];
    conv_forward(L, cache.conv_y[l], z);
    Tensor& y = cache.conv_y[l + 1];
    y = Tensor(z.n, z.c, z.h, z.w);
    const std::size_t spatial = std::size_t(z.h) * z.w;
    if (L.bn) {
      std::vector<double>& mean = cache.conv_mean[l];
      std::vector<double>& inv_std = cache.conv_inv_std[l];
      if (mode == Mode::Train) {
        channel_stats(z, mean, cache.conv_var[l]);
      } else {
        mean = params_[L.mean].value;
        cache.conv_var[l] = params_[L.var].value;
      }
      inv_std.resize(L.out_c);
      for (int c = 0; c < L.out_c; ++c) inv_std[c] = 1.0 / std::sqrt(cache.conv_var[l][c] + config_.bn_epsilon);
      const auto& gamma = params_[L.gamma].value;
      const auto& beta = params_[L.beta].value;
      for (int i = 0; i < z.n; ++i) {
        for (int c = 0; c < z.c; ++c) {
          const double* zp = z.sample(i) + c * spatial;
          double* yp = y.sample(i) + c * spatial;
          for (std::size_t k = 0; k < spatial; ++k) {
            yp[k] = std::max(0.0, gamma[c] * (zp[k] - mean[c]) * inv_std[c] + beta[c]);
          }
        }
      }
    } else {
      for (std::size_t k = 0; k < z.data.size(); ++k) y.data[k] = std::max(0.0, z.data[k]);
    }
  }

  const Tensor& last = cache.conv_y[layers];
  const std::size_t spatial = std::size_t(last.h) * last.w;
  cache.pooled = Tensor(last.n, last.c);
  for (int i = 0; i < last.n; ++i) {
    for (int c = 0; c < last.c; ++c) {
      const double* p = last.sample(i) + c * spatial;
      double s = 0.0;
      for (std::size_t k = 0; k < spatial; ++k) s += p[k];
      cache.pooled.sample(i)[c] = s / static_cast<double>(spatial);
    }
  }

  dense_forward(fc_, cache.pooled, cache.fc_out);
  for (double& v : cache.fc_out.data) v = std::max(0.0, v);
  dense_forward(pfp_, cache.fc_out, cache.pfp_z);

  const int n = input.n;
  const int d = config_.pfp_dim;
  if (mode == Mode::Train) {
    channel_stats(cache.pfp_z, cache.pfp_mean, cache.pfp_var);
  } else {
    cache.pfp_mean = params_[pfp_mean_].value;
    cache.pfp_var = params_[pfp_var_].value;
  }
  cache.pfp_inv_std.resize(d);
  for (int j = 0; j < d; ++j) cache.pfp_inv_std[j] = 1.0 / std::sqrt(cache.pfp_var[j] + config_.bn_epsilon);
  cache.fingerprint = Tensor(n, d);
  const auto& gamma = params_[pfp_gamma_].value;
  const auto& beta = params_[pfp_beta_].value;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      cache.fingerprint.sample(i)[j] =
          gamma[j] * (cache.pfp_z.sample(i)[j] - cache.pfp_mean[j]) * cache.pfp_inv_std[j] + beta[j];
    }
  }

  cache.dropped = cache.fingerprint;
  if (mode == Mode::Train && config_.dropout_rate > 0.0) {
    Rng rng(dropout_seed);
    const double keep_scale = 1.0 / (1.0 - config_.dropout_rate);
    cache.dropout_mask.resize(cache.dropped.data.size());
    for (std::size_t k = 0; k < cache.dropout_mask.size(); ++k) {
      cache.dropout_mask[k] = rng.uniform() < config_.dropout_rate ? 0.0 : keep_scale;
      cache.dropped.data[k] *= cache.dropout_mask[k];
    }
  }

  for (Task t : kTasks) {
    Tensor& probs = cache.probabilities[index_of(t)];
    dense_forward(heads_[index_of(t)], cache.dropped, probs);
    softmax_rows(probs);
  }
  return cache;
}

std::vector<Prediction> Model::predictions(const ForwardCache& cache) const {
  const int n = cache.fingerprint.n;
  std::vector<Prediction> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Prediction& p = out[static_cast<std::size_t>(i)];
    for (Task t : kTasks) {
      const Tensor& probs = cache.probabilities[index_of(t)];
      p.probabilities[index_of(t)].assign(probs.sample(i), probs.sample(i) + probs.sample_size());
    }
    p.fingerprint.assign(cache.fingerprint.sample(i), cache.fingerprint.sample(i) + cache.fingerprint.sample_size());
  }
  return out;
}

std::vector<Prediction> Model::predict(std::span<const MapStack> stacks, int chunk) const {
  std::vector<Prediction> out;
  out.reserve(stacks.size());
  for (std::size_t start = 0; start < stacks.size(); start += static_cast<std::size_t>(chunk)) {
    const auto part = stacks.subspan(start, std::min<std::size_t>(static_cast<std::size_t>(chunk), stacks.size() - start));
    const ForwardCache cache = forward(encode_inputs(part, config_), Mode::Inference);
    for (auto& p : predictions(cache)) out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> Model::fingerprint(const MapStack& stack) const {
  return predict(std::span(&stack, 1)).front().fingerprint;
}

Tensor Model::first_layer_activations(const Tensor& input) const {
  const ConvLayer& L = convs_.front();
  if (input.c != config_.input_channels || input.h != config_.input_side || input.w != config_.input_side) {
    throw Error(ErrorKind::ShapeMismatch, "input does not match the model");
  }
  Tensor z;
  conv_forward(L, input, z);
  const std::size_t spatial = std::size_t(z.h) * z.w;
  for (int i = 0; i < z.n; ++i) {
    for (int c = 0; c < z.c; ++c) {
      double* p = z.sample(i) + c * spatial;
      for (std::size_t k = 0; k < spatial; ++k) {
        double a = p[k];
        if (L.bn) {
          const double inv_std = 1.0 / std::sqrt(params_[L.var].value[c] + config_.bn_epsilon);
          a = params_[L.gamma].value[c] * (a - params_[L.mean].value[c]) * inv_std + params_[L.beta].value[c];
        }
        p[k] = std::max(0.0, a);
      }
    }
  }
  return z;
}

// ---------------------------------------------------------------------------
// Loss and backward

double Model::loss(const ForwardCache& cache, std::span<const LabelIndices> labels) {
  const int n = cache.fingerprint.n;
  if (labels.size() != static_cast<std::size_t>(n)) throw Error(ErrorKind::ShapeMismatch, "label count mismatch");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (Task t : kTasks) {
      const Tensor& probs = cache.probabilities[index_of(t)];
      const int idx = labels[static_cast<std::size_t>(i)][index_of(t)];
      if (idx < 0 || static_cast<std::size_t>(idx) >= probs.sample_size()) {
        throw Error(ErrorKind::IndexOutOfRange, "label index " + std::to_string(idx) + " for task " +
                                                    std::string(task_name(t)));
      }
      total -= std::log(std::max(probs.sample(i)[idx], 1e-300));
    }
  }
  return total / static_cast<double>(n);
}

Gradients Model::backward(const ForwardCache& cache, std::span<const LabelIndices> labels) const {
  const int n = cache.fingerprint.n;
  check_labels(labels, config_, static_cast<std::size_t>(n));
  Gradients g(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) g[i].assign(params_[i].value.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  const int d = config_.pfp_dim;

  Tensor d_dropped(n, d);
  MapMat dd(d_dropped.data.data(), n, d);
  const ConstMapMat dropped(cache.dropped.data.data(), n, d);
  for (Task t : kTasks) {
    const DenseLayer& H = heads_[index_of(t)];
    const Tensor& probs = cache.probabilities[index_of(t)];
    RowMat dlogits = ConstMapMat(probs.data.data(), n, H.out);
    for (int i = 0; i < n; ++i) dlogits(i, labels[static_cast<std::size_t>(i)][index_of(t)]) -= 1.0;
    dlogits *= inv_n;
    MapMat(g[H.w].data(), H.out, H.in).noalias() += dlogits.transpose() * dropped;
    for (int j = 0; j < H.out; ++j) g[H.b][j] += dlogits.col(j).sum();
    dd.noalias() += dlogits * ConstMapMat(params_[H.w].value.data(), H.out, H.in);
  }

  Tensor d_fp = d_dropped;
  if (!cache.dropout_mask.empty()) {
    for (std::size_t k = 0; k < d_fp.data.size(); ++k) d_fp.data[k] *= cache.dropout_mask[k];
  }

  Tensor d_pfp;
  if (cache.mode == Mode::Train) {
    batch_norm_backward(cache.pfp_z, cache.pfp_mean, cache.pfp_inv_std, params_[pfp_gamma_].value, d_fp,
                        g[pfp_gamma_], g[pfp_beta_], d_pfp);
  } else {
    d_pfp = Tensor(n, d);
    const auto& gamma = params_[pfp_gamma_].value;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) {
        const double xhat = (cache.pfp_z.sample(i)[j] - cache.pfp_mean[j]) * cache.pfp_inv_std[j];
        g[pfp_gamma_][j] += d_fp.sample(i)[j] * xhat;
        g[pfp_beta_][j] += d_fp.sample(i)[j];
        d_pfp.sample(i)[j] = d_fp.sample(i)[j] * gamma[j] * cache.pfp_inv_std[j];
      }
    }
  }

  const auto dense_backward = [&](const DenseLayer& L, const Tensor& x, const Tensor& dy, Tensor* dx) {
    const ConstMapMat dym(dy.data.data(), n, L.out);
    MapMat(g[L.w].data(), L.out, L.in).noalias() += dym.transpose() * ConstMapMat(x.data.data(), n, L.in);
    for (int j = 0; j < L.out; ++j) g[L.b][j] += dym.col(j).sum();
    if (dx) {
      *dx = Tensor(n, L.in);
      MapMat(dx->data.data(), n, L.in).noalias() = dym * ConstMapMat(params_[L.w].value.data(), L.out, L.in);
    }
  };

  Tensor d_fc;
  dense_backward(pfp_, cache.fc_out, d_pfp, &d_fc);
  for (std::size_t k = 0; k < d_fc.data.size(); ++k) {
    if (cache.fc_out.data[k] <= 0.0) d_fc.data[k] = 0.0;
  }
  Tensor d_pooled;
  dense_backward(fc_, cache.pooled, d_fc, &d_pooled);

  const std::size_t layers = convs_.size();
  Tensor dy(cache.conv_y[layers].n, cache.conv_y[layers].c, cache.conv_y[layers].h, cache.conv_y[layers].w);
  {
    const std::size_t spatial = std::size_t(dy.h) * dy.w;
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < dy.c; ++c) {
        const double v = d_pooled.sample(i)[c] / static_cast<double>(spatial);
        std::fill_n(dy.sample(i) + c * spatial, spatial, v);
      }
    }
  }

  for (std::size_t l = layers; l-- > 0;) {
    const ConvLayer& L = convs_[l];
    const Tensor& y = cache.conv_y[l + 1];
    const Tensor& z = cache.conv_z[l];
    for (std::size_t k = 0; k < dy.data.size(); ++k) {
      if (y.data[k] <= 0.0) dy.data[k] = 0.0;
    }
    Tensor dz;
    if (L.bn) {
      if (cache.mode == Mode::Train) {
        batch_norm_backward(z, cache.conv_mean[l], cache.conv_inv_std[l], params_[L.gamma].value, dy, g[L.gamma],
                            g[L.beta], dz);
      } else {
        dz = Tensor(z.n, z.c, z.h, z.w);
        const std::size_t spatial = std::size_t(z.h) * z.w;
        for (int i = 0; i < n; ++i) {
          for (int c = 0; c < z.c; ++c) {
            for (std::size_t k = 0; k < spatial; ++k) {
              const std::size_t at = std::size_t(i) * z.sample_size() + c * spatial + k;
              const double xhat = (z.data[at] - cache.conv_mean[l][c]) * cache.conv_inv_std[l][c];
              g[L.gamma][c] += dy.data[at] * xhat;
              g[L.beta][c] += dy.data[at];
              dz.data[at] = dy.data[at] * params_[L.gamma].value[c] * cache.conv_inv_std[l][c];
            }
          }
        }
      }
    } else {
      dz = std::move(dy);
    }

    const int kk = L.in_c * L.kernel * L.kernel;
    const int p = L.out_side * L.out_side;
    const Tensor& x = cache.conv_y[l];
    Tensor dx;
    if (l > 0) dx = Tensor(x.n, x.c, x.h, x.w);
    RowMat cols(kk, p);
    RowMat dcols;
    MapMat gw(g[L.w].data(), L.out_c, kk);
    const ConstMapMat w(params_[L.w].value.data(), L.out_c, kk);
    for (int i = 0; i < n; ++i) {
      const ConstMapMat dzi(dz.sample(i), L.out_c, p);
      im2col(x.sample(i), L.in_c, L.in_side, L.kernel, L.stride, L.out_side, cols.data());
      gw.noalias() += dzi * cols.transpose();
      for (int c = 0; c < L.out_c; ++c) g[L.b][c] += dzi.row(c).sum();
      if (l > 0) {
        dcols.noalias() = w.transpose() * dzi;
        col2im(dcols.data(), L.in_c, L.in_side, L.kernel, L.stride, L.out_side, dx.sample(i));
      }
    }
    dy = std::move(dx);
  }
  return g;
}

void Model::update_running_stats(const ForwardCache& cache) {
  if (cache.mode != Mode::Train) return;
  const double m = config_.bn_momentum;
  const auto blend = [m](std::vector<double>& running, const std::vector<double>& batch) {
    for (std::size_t k = 0; k < running.size(); ++k) running[k] = m * running[k] + (1.0 - m) * batch[k];
  };
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    if (!convs_[l].bn) continue;
    blend(params_[convs_[l].mean].value, cache.conv_mean[l]);
    blend(params_[convs_[l].var].value, cache.conv_var[l]);
  }
  blend(params_[pfp_mean_].value, cache.pfp_mean);
  blend(params_[pfp_var_].value, cache.pfp_var);
}

void Model::adam_step(const Gradients& grads, double lr, const TrainConfig& cfg) {
  if (grads.size() != params_.size()) throw Error(ErrorKind::ShapeMismatch, "gradient count mismatch");
  ++adam_steps_;
  const double t = static_cast<double>(adam_steps_);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = params_[i];
    if (!p.trainable) continue;
    if (p.m.size() != p.value.size()) {
      p.m.assign(p.value.size(), 0.0);
      p.v.assign(p.value.size(), 0.0);
    }
    const std::vector<double>& g = grads[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      p.m[k] = cfg.adam_beta1 * p.m[k] + (1.0 - cfg.adam_beta1) * g[k];
      p.v[k] = cfg.adam_beta2 * p.v[k] + (1.0 - cfg.adam_beta2) * g[k] * g[k];
      const double m_hat = p.m[k] / c1;
      const double v_hat = p.v[k] / c2;
      p.value[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Training

PlateauScheduler::PlateauScheduler(double initial_lr, double factor, int patience, double min_lr, double min_delta)
    : lr_(initial_lr),
      factor_(factor),
      min_lr_(min_lr),
      min_delta_(min_delta),
      patience_(patience),
      best_(std::numeric_limits<double>::infinity()) {}

bool PlateauScheduler::observe(double val_loss) {
  if (val_loss < best_ - min_delta_) {
    best_ = val_loss;
    wait_ = 0;
    return false;
  }
  if (++wait_ < patience_) return false;
  wait_ = 0;
  if (lr_ <= min_lr_) return false;
  lr_ = std::max(lr_ * factor_, min_lr_);
  return true;
}

std::array<double, kTaskCount> task_accuracy(std::span<const Prediction> preds, std::span<const LabelIndices> labels) {
  if (preds.size() != labels.size()) throw Error(ErrorKind::LengthMismatch, "prediction/label count mismatch");
  std::array<double, kTaskCount> acc{};
  if (preds.empty()) return acc;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (Task t : kTasks) {
      const int truth = labels[i][index_of(t)];
      if (truth >= 0 && preds[i].predicted(t) == static_cast<std::size_t>(truth)) acc[index_of(t)] += 1.0;
    }
  }
  for (double& a : acc) a /= static_cast<double>(preds.size());
  return acc;
}

TrainHistory train(Model& model, const LabeledStacks& train_set, const LabeledStacks& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw Error(ErrorKind::EmptyDataset, "training and validation sets must be non-empty");
  if (train_set.labels.size() != train_set.size() || val_set.labels.size() != val_set.size()) {
    throw Error(ErrorKind::ShapeMismatch, "every stack needs a label");
  }
  check_labels(train_set.labels, model.config(), train_set.size());
  check_labels(val_set.labels, model.config(), val_set.size());

  PlateauScheduler schedule(cfg);
  TrainHistory history;
  std::vector<std::size_t> order(train_set.size());
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = schedule.lr();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    std::array<double, kTaskCount> correct{};
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const MapStack*> batch;
      std::vector<LabelIndices> labels;
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(&train_set.stacks[order[k]]);
        labels.push_back(train_set.labels[order[k]]);
      }
      const ForwardCache cache =
          model.forward(encode_inputs(batch, model.config()), Mode::Train, derive_seed(cfg.seed, "dropout", step++));
      const double batch_loss = Model::loss(cache, labels);
      if (!std::isfinite(batch_loss)) throw Error(ErrorKind::NumericFailure, "non-finite training loss at epoch " + std::to_string(epoch));
      loss_sum += batch_loss * static_cast<double>(batch.size());
      const auto acc = task_accuracy(model.predictions(cache), labels);
      for (std::size_t t = 0; t < kTaskCount; ++t) correct[t] += acc[t] * static_cast<double>(batch.size());
      const Gradients grads = model.backward(cache, labels);
      model.update_running_stats(cache);
      model.adam_step(grads, rec.lr, cfg);
    }
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    for (std::size_t t = 0; t < kTaskCount; ++t) rec.train_accuracy[t] = correct[t] / static_cast<double>(train_set.size());

    double val_loss_sum = 0.0;
    std::vector<Prediction> val_preds;
    for (std::size_t start = 0; start < val_set.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(val_set.size() - start, static_cast<std::size_t>(cfg.batch_size));
      const ForwardCache cache = model.forward(
          encode_inputs(std::span(val_set.stacks).subspan(start, count), model.config()), Mode::Inference);
      val_loss_sum += Model::loss(cache, std::span(val_set.labels).subspan(start, count)) * static_cast<double>(count);
      for (auto& p : model.predictions(cache)) val_preds.push_back(std::move(p));
    }
    rec.val_loss = val_loss_sum / static_cast<double>(val_set.size());
    rec.val_accuracy = task_accuracy(val_preds, val_set.labels);
    rec.lr_reduced = schedule.observe(rec.val_loss);
    history.epochs.push_back(rec);
  }
  return history;
}

std::string TrainHistory::to_tsv() const {
  std::ostringstream out;
  out.precision(9);
  out << "epoch\tlr\ttrain_loss\tacc_C\tacc_A\tacc_T\tacc_H\tval_loss\tval_acc_C\tval_acc_A\tval_acc_T\tval_acc_H\tlr_reduced\n";
  for (const auto& e : epochs) {
    out << e.epoch << '\t' << e.lr << '\t' << e.train_loss;
    for (double a : e.train_accuracy) out << '\t' << a;
    out << '\t' << e.val_loss;
    for (double a : e.val_accuracy) out << '\t' << a;
    out << '\t' << (e.lr_reduced ? 1 : 0) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// First-layer inspection

std::vector<ActivationMap> top_activations(const Model& model, std::span<const MapStack> stacks, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::BadConfig, "k must be positive");
  if (stacks.size() < k) {
    throw Error(ErrorKind::TooFew, "need at least " + std::to_string(k) + " stacks, got " + std::to_string(stacks.size()));
  }
  const int channels = model.config().conv_specs.front().out_channels;
  std::vector<std::vector<double>> sums(static_cast<std::size_t>(channels), std::vector<double>(stacks.size()));
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    const Tensor maps = model.first_layer_activations(encode_inputs(stacks.subspan(i, 1), model.config()));
    const std::size_t spatial = std::size_t(maps.h) * maps.w;
    for (int c = 0; c < channels; ++c) {
      const double* p = maps.sample(0) + c * spatial;
      sums[c][i] = std::accumulate(p, p + spatial, 0.0);
    }
  }

  std::vector<ActivationMap> out;
  for (int c = 0; c < channels; ++c) {
    std::vector<std::size_t> rank(stacks.size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return sums[c][a] > sums[c][b]; });
    for (std::size_t r = 0; r < k; ++r) {
      ActivationMap m;
      m.domain_id = stacks[rank[r]].domain_id;
      m.channel = c;
      m.input_index = rank[r];
      m.summed_intensity = sums[c][rank[r]];
      out.push_back(std::move(m));
    }
  }
  for (ActivationMap& m : out) {
    const Tensor maps = model.first_layer_activations(encode_inputs(stacks.subspan(m.input_index, 1), model.config()));
    const std::size_t spatial = std::size_t(maps.h) * maps.w;
    m.side = maps.h;
    const double* p = maps.sample(0) + m.channel * spatial;
    m.values.assign(p, p + spatial);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  std::vector<std::uint8_t> payload;
  std::uint32_t tensor_count = 0;
  const auto put_tensor = [&](const std::string& name, const std::vector<int>& shape, const std::vector<double>& values) {
    put_u16(payload, static_cast<std::uint16_t>(name.size()));
    payload.insert(payload.end(), name.begin(), name.end());
    put_u8(payload, static_cast<std::uint8_t>(shape.size()));
    for (int d : shape) put_u32(payload, static_cast<std::uint32_t>(d));
    for (double v : values) put_f32(payload, v);
    ++tensor_count;
  };
  for (const Param& p : model.params_) put_tensor(p.name, p.shape, p.value);
  for (const Param& p : model.params_) {
    if (!p.trainable || p.m.size() != p.value.size()) continue;
    put_tensor("adam.m/" + p.name, p.shape, p.m);
    put_tensor("adam.v/" + p.name, p.shape, p.v);
  }

  json header;
  header["format"] = 1;
  header["config"] = json::parse(model.config_.to_json());
  header["vocabulary"] = model.vocabulary_.to_text();
  header["vocabulary_hash"] = hex64(model.vocabulary_.hash());
  header["adam_steps"] = model.adam_steps_;
  header["tensor_count"] = tensor_count;
  header["payload_hash"] = hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(payload.data()), payload.size())));
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.text(kCheckpointMagic.size()) != std::string(kCheckpointMagic.begin(), kCheckpointMagic.end())) {
    throw Error(ErrorKind::CorruptCheckpoint, "bad checkpoint magic");
  }
  const std::uint32_t header_len = r.u(4);
  json header;
  try {
    header = json::parse(r.text(header_len));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptCheckpoint, std::string("header: ") + e.what());
  }
  const auto payload = r.rest();
  ModelConfig cfg;
  Vocabulary vocab;
  std::uint32_t tensor_count = 0;
  try {
    if (header.at("format").get<int>() != 1) throw Error(ErrorKind::CorruptCheckpoint, "unsupported checkpoint format");
    if (header.at("payload_hash").get<std::string>() !=
        hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(payload.data()), payload.size())))) {
      throw Error(ErrorKind::CorruptCheckpoint, "payload hash mismatch");
    }
    cfg = ModelConfig::from_json(header.at("config").dump());
    vocab = Vocabulary::from_text(header.at("vocabulary").get<std::string>());
    if (hex64(vocab.hash()) != header.at("vocabulary_hash").get<std::string>()) {
      throw Error(ErrorKind::CorruptCheckpoint, "vocabulary hash mismatch");
    }
    tensor_count = header.at("tensor_count").get<std::uint32_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptCheckpoint, std::string("header: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CorruptCheckpoint) throw;
    throw Error(ErrorKind::CorruptCheckpoint, e.what());
  }

  Model model(cfg, 0);
  model.set_vocabulary(std::move(vocab));
  model.adam_steps_ = header.at("adam_steps").get<std::uint64_t>();
  const auto find = [&](const std::string& name) -> Param& {
    for (Param& p : model.params_) {
      if (p.name == name) return p;
    }
    throw Error(ErrorKind::CorruptCheckpoint, "unknown tensor '" + name + "'");
  };
  std::vector<bool> seen(model.params_.size(), false);
  Reader t(payload);
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    const std::string name = t.text(t.u(2));
    const std::uint32_t ndim = t.u(1);
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(t.u(4)));
    std::string base = name;
    std::vector<double>* dst = nullptr;
    if (name.rfind("adam.m/", 0) == 0 || name.rfind("adam.v/", 0) == 0) base = name.substr(7);
    Param& p = find(base);
    if (shape != p.shape) throw Error(ErrorKind::CorruptCheckpoint, "shape mismatch for '" + name + "'");
    if (name.rfind("adam.m/", 0) == 0) {
      dst = &p.m;
    } else if (name.rfind("adam.v/", 0) == 0) {
      dst = &p.v;
    } else {
      dst = &p.value;
      seen[static_cast<std::size_t>(&p - model.params_.data())] = true;
    }
    dst->resize(p.value.size());
    for (double& v : *dst) v = t.f32();
  }
  if (t.position() != payload.size()) throw Error(ErrorKind::CorruptCheckpoint, "trailing bytes after tensors");
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw Error(ErrorKind::CorruptCheckpoint, "checkpoint is missing parameters");
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot create '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

}  // namespace foldmap
