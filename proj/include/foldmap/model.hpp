#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "foldmap/dataset.hpp"
#include "foldmap/labels.hpp"
#include "foldmap/matrices.hpp"

namespace foldmap {

struct ConvSpec {
  int kernel = 4;
  int stride = 1;
  int out_channels = 32;
  bool batch_norm = true;

  bool operator==(const ConvSpec&) const = default;
};

struct ModelConfig {
  int input_channels = 3;
  int input_side = static_cast<int>(kMapSide);
  std::vector<ConvSpec> conv_specs{{4, 1, 32}, {4, 2, 64}, {4, 4, 128}, {4, 4, 128}, {4, 2, 256}};
  int fc_dim = 1024;
  int pfp_dim = 512;
  double dropout_rate = 0.25;
  std::array<int, kTaskCount> head_sizes{4, 41, 1391, 6070};
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;
  bool distance_only_input = false;  // feed DIST into all three channels

  /// Layer widths used for the comparator network at full scale.
  static ModelConfig reference(std::array<int, kTaskCount> heads = {4, 41, 1391, 6070});
  /// Same layer pattern, narrow enough for desk-scale runs.
  static ModelConfig tiny(std::array<int, kTaskCount> heads);

  /// Spatial side after each conv layer.
  std::vector<int> conv_output_sides() const;
  void validate() const;  // throws BadConfig

  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);

  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  int max_epochs = 150;
  int batch_size = 32;
  double initial_lr = 0.001;
  double lr_factor = 0.8;
  int plateau_patience = 5;
  double min_lr = 0.0001;
  double plateau_min_delta = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-7;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
};

/// N x C x H x W, row-major.
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 1;
  int w = 1;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_ = 1, int w_ = 1) : n(n_), c(c_), h(h_), w(w_), data(std::size_t(n_) * c_ * h_ * w_, 0.0) {}
  std::size_t sample_size() const { return std::size_t(c) * h * w; }
  double* sample(int i) { return data.data() + std::size_t(i) * sample_size(); }
  const double* sample(int i) const { return data.data() + std::size_t(i) * sample_size(); }
};

/// Dequantise stacks into [0,1] / [-1,1] / [-1,1] channels.
Tensor encode_inputs(std::span<const MapStack* const> stacks, const ModelConfig& cfg);
Tensor encode_inputs(std::span<const MapStack> stacks, const ModelConfig& cfg);

enum class Mode { Train, Inference };

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  bool trainable = true;
  std::vector<double> m;  // Adam first moment
  std::vector<double> v;  // Adam second moment
};

struct Prediction {
  std::array<std::vector<double>, kTaskCount> probabilities;
  std::vector<double> fingerprint;

  std::size_t predicted(Task t) const;  // argmax, lowest index wins ties
};

/// Everything backward() needs from a forward pass.
struct ForwardCache {
  Mode mode = Mode::Inference;
  std::vector<Tensor> conv_z;     // pre-normalisation conv outputs
  std::vector<Tensor> conv_y;     // post-activation; conv_y[0] is the input
  std::vector<std::vector<double>> conv_mean, conv_inv_std, conv_var;
  Tensor pooled, fc_out, pfp_z, fingerprint, dropped;
  std::vector<double> pfp_mean, pfp_inv_std, pfp_var;
  std::vector<double> dropout_mask;
  std::array<Tensor, kTaskCount> probabilities;
};

using Gradients = std::vector<std::vector<double>>;

class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  const Param& param(std::string_view name) const;
  std::size_t parameter_count() const;

  const Vocabulary& vocabulary() const { return vocabulary_; }
  void set_vocabulary(Vocabulary v);

  std::uint64_t adam_steps() const { return adam_steps_; }

  ForwardCache forward(const Tensor& input, Mode mode, std::uint64_t dropout_seed = 0) const;
  std::vector<Prediction> predictions(const ForwardCache& cache) const;

  /// Inference predictions in fixed-size chunks.
  std::vector<Prediction> predict(std::span<const MapStack> stacks, int chunk = 32) const;
  std::vector<double> fingerprint(const MapStack& stack) const;

  /// First conv layer post-activation maps, shape N x C x side x side.
  Tensor first_layer_activations(const Tensor& input) const;

  /// Mean over the batch of the summed per-head cross-entropies.
  static double loss(const ForwardCache& cache, std::span<const LabelIndices> labels);

  Gradients backward(const ForwardCache& cache, std::span<const LabelIndices> labels) const;

  /// Fold train-mode batch statistics into the running averages.
  void update_running_stats(const ForwardCache& cache);

  void adam_step(const Gradients& grads, double lr, const TrainConfig& cfg);

 private:
  struct ConvLayer {
    int in_c, out_c, kernel, stride, in_side, out_side;
    bool bn;
    std::size_t w, b, gamma, beta, mean, var;
  };
  struct DenseLayer {
    int in, out;
    std::size_t w, b;
  };

  std::size_t add_param(std::string name, std::vector<int> shape, bool trainable);
  void conv_forward(const ConvLayer& L, const Tensor& x, Tensor& z) const;
  void dense_forward(const DenseLayer& L, const Tensor& x, Tensor& y) const;

  friend void save_checkpoint(const Model&, const std::filesystem::path&);
  friend std::vector<std::uint8_t> encode_checkpoint(const Model&);
  friend Model decode_checkpoint(std::span<const std::uint8_t>);

  ModelConfig config_;
  std::vector<Param> params_;
  std::vector<ConvLayer> convs_;
  DenseLayer fc_{};
  DenseLayer pfp_{};
  std::size_t pfp_gamma_ = 0, pfp_beta_ = 0, pfp_mean_ = 0, pfp_var_ = 0;
  std::array<DenseLayer, kTaskCount> heads_{};
  Vocabulary vocabulary_;
  std::uint64_t adam_steps_ = 0;
};

double glorot_limit(int fan_in, int fan_out);

/// Reduce-on-plateau learning-rate schedule.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, double factor, int patience, double min_lr, double min_delta);
  explicit PlateauScheduler(const TrainConfig& cfg)
      : PlateauScheduler(cfg.initial_lr, cfg.lr_factor, cfg.plateau_patience, cfg.min_lr, cfg.plateau_min_delta) {}

  /// Record an epoch's validation loss; true when the rate was reduced.
  bool observe(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_, factor_, min_lr_, min_delta_;
  int patience_;
  int wait_ = 0;
  double best_;
};

struct LabeledStacks {
  std::vector<MapStack> stacks;
  std::vector<LabelIndices> labels;

  std::size_t size() const { return stacks.size(); }
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::array<double, kTaskCount> train_accuracy{};
  double val_loss = 0.0;
  std::array<double, kTaskCount> val_accuracy{};
  bool lr_reduced = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::string to_tsv() const;
};

/// Per-task fraction of correct argmax predictions (unknown labels count as wrong).
std::array<double, kTaskCount> task_accuracy(std::span<const Prediction> preds, std::span<const LabelIndices> labels);

TrainHistory train(Model& model, const LabeledStacks& train_set, const LabeledStacks& val_set, const TrainConfig& cfg);

struct ActivationMap {
  std::string domain_id;
  int channel = 0;
  std::size_t input_index = 0;
  double summed_intensity = 0.0;
  int side = 0;
  std::vector<double> values;
};

/// Per first-layer channel, the k inputs with the largest summed activation.
std::vector<ActivationMap> top_activations(const Model& model, std::span<const MapStack> stacks, std::size_t k);

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace foldmap
