#include "fxplain/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "fxplain/errors.hpp"

namespace fxplain::lstm {

LstmParams::LstmParams(std::size_t hidden, std::size_t input_dim)
    : hidden_(hidden), input_dim_(input_dim), values_(kGates * hidden * (input_dim + hidden + 1) + hidden + 1, 0.0) {
  if (hidden == 0 || input_dim == 0) throw ShapeError("LSTM hidden size and input dimension must be positive");
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Activations of every step, kept for the backward pass.
struct Trace {
  std::size_t steps = 0;
  std::size_t hidden = 0;
  std::vector<double> gate[kGates];  // post-activation i, f, g, o: steps x hidden
  std::vector<double> c;             // (steps + 1) x hidden, row 0 = c_0
  std::vector<double> h;             // (steps + 1) x hidden, row 0 = h_0
  std::vector<double> tanh_c;        // steps x hidden
  double output = 0.0;
};

void check_shape(const LstmParams& p, const Matrix& seq) {
  if (seq.rows() == 0) throw ShapeError("LSTM input sequence is empty");
  if (seq.cols() != p.input_dim()) {
    throw ShapeError("LSTM input width " + std::to_string(seq.cols()) + " does not match model input dimension " +
                     std::to_string(p.input_dim()));
  }
}

void run_forward(const LstmParams& p, const Matrix& seq, Trace& tr) {
  const std::size_t H = p.hidden(), D = p.input_dim(), T = seq.rows();
  tr.steps = T;
  tr.hidden = H;
  for (auto& g : tr.gate) g.assign(T * H, 0.0);
  tr.c.assign((T + 1) * H, 0.0);
  tr.h.assign((T + 1) * H, 0.0);
  tr.tanh_c.assign(T * H, 0.0);

  const double* v = p.values().data();
  std::vector<double> z(kGates * H);
  for (std::size_t t = 0; t < T; ++t) {
    const double* x = seq.row(t).data();
    const double* h_prev = &tr.h[t * H];
    for (std::size_t g = 0; g < kGates; ++g) {
      const Gate gate = static_cast<Gate>(g);
      const double* W = v + p.w_offset(gate);
      const double* U = v + p.u_offset(gate);
      const double* b = v + p.b_offset(gate);
      for (std::size_t r = 0; r < H; ++r) {
        double acc = b[r];
        const double* Wr = W + r * D;
        for (std::size_t c = 0; c < D; ++c) acc += Wr[c] * x[c];
        const double* Ur = U + r * H;
        for (std::size_t c = 0; c < H; ++c) acc += Ur[c] * h_prev[c];
        z[g * H + r] = acc;
      }
    }
    for (std::size_t r = 0; r < H; ++r) {
      const double i = sigmoid(z[0 * H + r]);
      const double f = sigmoid(z[1 * H + r]);
      const double gg = std::tanh(z[2 * H + r]);
      const double o = sigmoid(z[3 * H + r]);
      tr.gate[0][t * H + r] = i;
      tr.gate[1][t * H + r] = f;
      tr.gate[2][t * H + r] = gg;
      tr.gate[3][t * H + r] = o;
      const double c = f * tr.c[t * H + r] + i * gg;
      tr.c[(t + 1) * H + r] = c;
      const double tc = std::tanh(c);
      tr.tanh_c[t * H + r] = tc;
      tr.h[(t + 1) * H + r] = o * tc;
    }
  }
  double out = p.b_out();
  for (std::size_t r = 0; r < H; ++r) out += p.w_out(r) * tr.h[T * H + r];
  tr.output = out;
}

// Accumulates d(output)/d(params) * d_output into grad.
void run_backward(const LstmParams& p, const Matrix& seq, const Trace& tr, double d_output, Gradients& grad) {
  const std::size_t H = p.hidden(), D = p.input_dim(), T = tr.steps;
  const double* v = p.values().data();
  double* gv = grad.values().data();

  std::vector<double> dh(H), dc(H, 0.0), dh_prev(H), dz(kGates * H);
  for (std::size_t r = 0; r < H; ++r) {
    gv[p.w_out_offset() + r] += d_output * tr.h[T * H + r];
    dh[r] = d_output * p.w_out(r);
  }
  gv[p.size() - 1] += d_output;

  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t r = 0; r < H; ++r) {
      const double i = tr.gate[0][t * H + r];
      const double f = tr.gate[1][t * H + r];
      const double g = tr.gate[2][t * H + r];
      const double o = tr.gate[3][t * H + r];
      const double tc = tr.tanh_c[t * H + r];
      const double c_prev = tr.c[t * H + r];
      const double d_o = dh[r] * tc;
      dc[r] += dh[r] * o * (1.0 - tc * tc);
      dz[0 * H + r] = dc[r] * g * i * (1.0 - i);
      dz[1 * H + r] = dc[r] * c_prev * f * (1.0 - f);
      dz[2 * H + r] = dc[r] * i * (1.0 - g * g);
      dz[3 * H + r] = d_o * o * (1.0 - o);
      dc[r] *= f;
    }
    const double* x = seq.row(t).data();
    const double* h_prev = &tr.h[t * H];
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    for (std::size_t g = 0; g < kGates; ++g) {
      const Gate gate = static_cast<Gate>(g);
      double* dW = gv + p.w_offset(gate);
      double* dU = gv + p.u_offset(gate);
      double* db = gv + p.b_offset(gate);
      const double* U = v + p.u_offset(gate);
      for (std::size_t r = 0; r < H; ++r) {
        const double d = dz[g * H + r];
        if (d == 0.0) continue;
        double* dWr = dW + r * D;
        for (std::size_t c = 0; c < D; ++c) dWr[c] += d * x[c];
        double* dUr = dU + r * H;
        const double* Ur = U + r * H;
        for (std::size_t c = 0; c < H; ++c) {
          dUr[c] += d * h_prev[c];
          dh_prev[c] += d * Ur[c];
        }
        db[r] += d;
      }
    }
    dh.swap(dh_prev);
  }
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

// Raw mt19937_64 output keeps initialization and shuffling identical across
// standard library implementations.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
}

double dataset_loss(const LstmParams& p, std::span<const Sample> samples) {
  double total = 0.0;
  for (const auto& s : samples) {
    const double r = forward(p, s.inputs) - s.target;
    total += r * r;
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace

double forward(const LstmParams& params, const Matrix& sequence) {
  check_shape(params, sequence);
  Trace tr;
  run_forward(params, sequence, tr);
  return tr.output;
}

double loss_mse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw std::invalid_argument("loss_mse: empty input");
  if (predictions.size() != targets.size()) throw std::invalid_argument("loss_mse: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    total += r * r;
  }
  return total / static_cast<double>(predictions.size());
}

Gradients gradients(const LstmParams& params, std::span<const Sample> batch, double* loss) {
  if (batch.empty()) throw std::invalid_argument("gradients: empty batch");
  Gradients grad(params.hidden(), params.input_dim());
  const double scale = 2.0 / static_cast<double>(batch.size());
  double total = 0.0;
  Trace tr;
  for (const auto& sample : batch) {
    check_shape(params, sample.inputs);
    run_forward(params, sample.inputs, tr);
    const double residual = tr.output - sample.target;
    total += residual * residual;
    run_backward(params, sample.inputs, tr, scale * residual, grad);
  }
  if (!all_finite(grad.values()) || !std::isfinite(total)) {
    throw TrainingError("numerical overflow in LSTM gradients (batch loss " + std::to_string(total) + ")");
  }
  if (loss) *loss = total / static_cast<double>(batch.size());
  return grad;
}

void TrainConfig::validate() const {
  if (hidden == 0) throw ConfigError("train.hidden must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (epochs < 1) throw ConfigError("train.epochs must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (gradient_clip && !(*gradient_clip > 0.0)) throw ConfigError("train.gradient_clip must be positive");
  if (early_stop_patience && *early_stop_patience < 1) throw ConfigError("train.early_stop_patience must be positive");
  if (optimizer == Optimizer::Adam) {
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.epsilon > 0.0)) {
      throw ConfigError("train.adam parameters out of range");
    }
  }
  if (!(divergence_factor > 1.0)) throw ConfigError("train.divergence_factor must exceed 1");
}

LstmParams initialize(std::size_t input_dim, const TrainConfig& config) {
  LstmParams p(config.hidden, input_dim);
  std::mt19937_64 rng(config.seed);
  const double k = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  for (double& x : p.values()) x = uniform(rng, -k, k);
  for (std::size_t r = 0; r < config.hidden; ++r) p.b(Gate::Forget, r) = config.forget_bias;
  return p;
}

TrainReport train(std::span<const Sample> train_set, const TrainConfig& config,
                  std::span<const Sample> validation_set) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: no training samples");
  const std::size_t input_dim = train_set.front().inputs.cols();

  TrainReport report;
  LstmParams params = initialize(input_dim, config);
  report.initial_loss = dataset_loss(params, train_set);
  const double divergence_threshold = config.divergence_factor * std::max(report.initial_loss, 1.0);

  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
  long long step = 0;
  const bool validate = !validation_set.empty();
  double best_val = std::numeric_limits<double>::infinity();
  LstmParams best_params = params;
  int best_epoch = 0;
  std::vector<Sample> batch;
  batch.reserve(static_cast<std::size_t>(config.batch_size));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);

      double batch_loss = 0.0;
      Gradients grad;
      try {
        grad = gradients(params, batch, &batch_loss);
      } catch (const TrainingError& e) {
        throw TrainingError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
      }
      epoch_loss += batch_loss * static_cast<double>(batch.size());

      auto g = grad.values();
      if (config.gradient_clip) {
        double norm = 0.0;
        for (double x : g) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > *config.gradient_clip) {
          const double s = *config.gradient_clip / norm;
          for (double& x : g) x *= s;
        }
      }
      auto w = params.values();
      ++step;
      if (config.optimizer == TrainConfig::Optimizer::Sgd) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= config.learning_rate * g[i];
      } else {
        const auto& a = config.adam;
        const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * g[i];
          v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * g[i] * g[i];
          w[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + a.epsilon);
        }
      }
    }
    epoch_loss /= static_cast<double>(train_set.size());
    if (!std::isfinite(epoch_loss) || epoch_loss > divergence_threshold || !all_finite(params.values())) {
      throw TrainingError("training diverged in epoch " + std::to_string(epoch) + " (loss " +
                          std::to_string(epoch_loss) + ", initial " + std::to_string(report.initial_loss) + ")");
    }
    report.train_loss.push_back(epoch_loss);

    if (validate) {
      const double val = dataset_loss(params, validation_set);
      report.validation_loss.push_back(val);
      if (val < best_val) {
        best_val = val;
        best_params = params;
        best_epoch = epoch;
      } else if (config.early_stop_patience && epoch - best_epoch >= *config.early_stop_patience) {
        spdlog::debug("early stop at epoch {} (best {})", epoch, best_epoch);
        break;
      }
    }
  }

  if (validate) {
    report.selected_epoch = best_epoch;
    report.params = std::move(best_params);
  } else {
    report.selected_epoch = static_cast<int>(report.train_loss.size());
    report.params = std::move(params);
  }
  return report;
}

Sample to_sample(const Window& normalized) {
  const std::size_t steps = normalized.inputs.size();
  const std::size_t dim = steps ? normalized.inputs.front().size() : 0;
  Sample s{Matrix(steps, dim), normalized.target};
  for (std::size_t t = 0; t < steps; ++t) {
    if (normalized.inputs[t].size() != dim) throw ShapeError("ragged window");
    std::copy(normalized.inputs[t].begin(), normalized.inputs[t].end(), s.inputs.row(t).begin());
  }
  return s;
}

double predict(const LstmParams& params, const NormStats& stats, const Window& window) {
  if (window.inputs.empty() || window.inputs.front().size() != params.input_dim() ||
      stats.mean.size() != params.input_dim()) {
    throw ShapeError("window dimension does not match the trained model");
  }
  const Sample s = to_sample(apply(stats, window));
  return stats.invert_target(forward(params, s.inputs));
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json config_to_json(const TrainConfig& c) {
  json j = {
      {"hidden", c.hidden},
      {"learning_rate", c.learning_rate},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"optimizer", c.optimizer == TrainConfig::Optimizer::Adam ? "adam" : "sgd"},
      {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
      {"gradient_clip", c.gradient_clip ? json(*c.gradient_clip) : json(nullptr)},
      {"early_stop_patience", c.early_stop_patience ? json(*c.early_stop_patience) : json(nullptr)},
      {"forget_bias", c.forget_bias},
      {"divergence_factor", c.divergence_factor},
  };
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.optimizer = j.at("optimizer").get<std::string>() == "sgd" ? TrainConfig::Optimizer::Sgd
                                                              : TrainConfig::Optimizer::Adam;
  c.adam.beta1 = j.at("adam").at("beta1").get<double>();
  c.adam.beta2 = j.at("adam").at("beta2").get<double>();
  c.adam.epsilon = j.at("adam").at("epsilon").get<double>();
  c.gradient_clip = j.at("gradient_clip").is_null() ? std::nullopt : std::optional(j.at("gradient_clip").get<double>());
  c.early_stop_patience = j.at("early_stop_patience").is_null()
                              ? std::nullopt
                              : std::optional(j.at("early_stop_patience").get<int>());
  c.forget_bias = j.at("forget_bias").get<double>();
  c.divergence_factor = j.at("divergence_factor").get<double>();
  return c;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& cp) {
  json j;
  j["format_version"] = kCheckpointVersion;
  j["hidden"] = cp.params.hidden();
  j["input_dim"] = cp.params.input_dim();
  j["variant"] = cp.variant;
  j["seed"] = cp.config.seed;
  j["config"] = config_to_json(cp.config);
  j["norm_stats"] = {{"mean", cp.norm_stats.mean}, {"stdev", cp.norm_stats.stdev}};
  j["params"] = std::vector<double>(cp.params.values().begin(), cp.params.values().end());
  return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw ParseError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint cp;
    cp.params = LstmParams(j.at("hidden").get<std::size_t>(), j.at("input_dim").get<std::size_t>());
    const auto values = j.at("params").get<std::vector<double>>();
    if (values.size() != cp.params.size()) throw ParseError("checkpoint parameter count does not match its shape");
    std::copy(values.begin(), values.end(), cp.params.values().begin());
    cp.norm_stats.mean = j.at("norm_stats").at("mean").get<std::vector<double>>();
    cp.norm_stats.stdev = j.at("norm_stats").at("stdev").get<std::vector<double>>();
    if (cp.norm_stats.mean.size() != cp.params.input_dim() || cp.norm_stats.stdev.size() != cp.params.input_dim()) {
      throw ParseError("checkpoint normalizer does not match the input dimension");
    }
    cp.config = config_from_json(j.at("config"));
    cp.variant = j.at("variant").get<std::string>();
    return cp;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << checkpoint_to_json(checkpoint) << '\n';
  if (!out) throw Error("cannot write checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace fxplain::lstm
