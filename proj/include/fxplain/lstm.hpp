#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fxplain/features.hpp"

namespace fxplain::lstm {

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Gate : std::size_t { Input = 0, Forget = 1, Cell = 2, Output = 3 };
inline constexpr std::size_t kGates = 4;

/// Single-layer LSTM followed by one linear output neuron. All tensors live
/// in one flat buffer so optimizers and gradient checks can treat the model
/// as a plain vector; the accessors below give the structured view.
///
/// Layout: W_i W_f W_g W_o (hidden x input each), U_i U_f U_g U_o
/// (hidden x hidden each), b_i b_f b_g b_o (hidden each), w_out (hidden),
/// b_out.
class LstmParams {
 public:
  LstmParams() = default;
  LstmParams(std::size_t hidden, std::size_t input_dim);

  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& W(Gate g, std::size_t r, std::size_t c) { return values_[w_offset(g) + r * input_dim_ + c]; }
  double W(Gate g, std::size_t r, std::size_t c) const { return values_[w_offset(g) + r * input_dim_ + c]; }
  double& U(Gate g, std::size_t r, std::size_t c) { return values_[u_offset(g) + r * hidden_ + c]; }
  double U(Gate g, std::size_t r, std::size_t c) const { return values_[u_offset(g) + r * hidden_ + c]; }
  double& b(Gate g, std::size_t r) { return values_[b_offset(g) + r]; }
  double b(Gate g, std::size_t r) const { return values_[b_offset(g) + r]; }
  double& w_out(std::size_t r) { return values_[w_out_offset() + r]; }
  double w_out(std::size_t r) const { return values_[w_out_offset() + r]; }
  double& b_out() { return values_.back(); }
  double b_out() const { return values_.back(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::size_t w_offset(Gate g) const noexcept { return static_cast<std::size_t>(g) * hidden_ * input_dim_; }
  std::size_t u_offset(Gate g) const noexcept {
    return kGates * hidden_ * input_dim_ + static_cast<std::size_t>(g) * hidden_ * hidden_;
  }
  std::size_t b_offset(Gate g) const noexcept {
    return kGates * hidden_ * (input_dim_ + hidden_) + static_cast<std::size_t>(g) * hidden_;
  }
  std::size_t w_out_offset() const noexcept { return kGates * hidden_ * (input_dim_ + hidden_ + 1); }

  friend bool operator==(const LstmParams&, const LstmParams&) = default;

 private:
  std::size_t hidden_ = 0;
  std::size_t input_dim_ = 0;
  std::vector<double> values_;
};

/// Gradients share the parameter layout.
using Gradients = LstmParams;

/// One training example: steps x input_dim inputs and a scalar target.
struct Sample {
  Matrix inputs;
  double target = 0.0;
};

/// h_0 = c_0 = 0; i, f, o via the logistic function, g via tanh;
/// c_t = f*c_{t-1} + i*g; h_t = o*tanh(c_t); returns w_out.h_T + b_out.
/// Throws ShapeError when the sequence is empty or its width != input_dim.
double forward(const LstmParams& params, const Matrix& sequence);

/// Mean squared residual. Throws std::invalid_argument on empty or unequal
/// inputs.
double loss_mse(std::span<const double> predictions, std::span<const double> targets);

/// Exact gradient of the batch-mean MSE by backpropagation through time.
/// `loss` receives the batch-mean MSE when non-null. Throws TrainingError if
/// any gradient entry is not finite.
Gradients gradients(const LstmParams& params, std::span<const Sample> batch, double* loss = nullptr);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  enum class Optimizer { Sgd, Adam };

  std::size_t hidden = 32;
  double learning_rate = 1e-3;
  int epochs = 300;
  int batch_size = 16;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Adam;
  AdamSettings adam;
  std::optional<double> gradient_clip = 5.0;  // global L2 norm
  std::optional<int> early_stop_patience = 25;
  double forget_bias = 1.0;
  /// Training stops with TrainingError once the epoch loss exceeds this
  /// multiple of max(initial loss, 1).
  double divergence_factor = 1e12;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

struct TrainReport {
  double initial_loss = 0.0;            // training loss of the initial parameters
  std::vector<double> train_loss;       // per epoch, mean of the batch losses
  std::vector<double> validation_loss;  // per epoch, empty without validation data
  int selected_epoch = 0;               // 1-based; best validation epoch or the last one
  LstmParams params;

  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

/// uniform(-1/sqrt(H), 1/sqrt(H)) weights from the seed, forget-gate bias
/// set to config.forget_bias.
LstmParams initialize(std::size_t input_dim, const TrainConfig& config);

/// Mini-batch training. With validation samples, keeps the parameters of the
/// best validation epoch and stops after `early_stop_patience` epochs without
/// improvement. Deterministic for a fixed seed. Throws TrainingError naming
/// the epoch when the loss diverges.
TrainReport train(std::span<const Sample> train_set, const TrainConfig& config,
                  std::span<const Sample> validation_set = {});

/// Normalized window -> model sample.
Sample to_sample(const Window& normalized);

/// Forward on the normalized window, then back to price units.
/// Throws ShapeError when the window width does not match the model.
double predict(const LstmParams& params, const NormStats& stats, const Window& window);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  LstmParams params;
  NormStats norm_stats;
  TrainConfig config;
  std::string variant;
};

std::string checkpoint_to_json(const Checkpoint& checkpoint);
/// Throws ParseError on malformed input or a format version other than
/// kCheckpointVersion.
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fxplain::lstm
