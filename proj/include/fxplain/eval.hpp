#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fxplain/features.hpp"
#include "fxplain/lstm.hpp"

namespace fxplain {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Mean squared residual. Throws std::invalid_argument on empty or unequal
/// inputs, like the other metrics.
double mse(std::span<const double> predictions, std::span<const double> actuals);
double mae(std::span<const double> predictions, std::span<const double> actuals);
/// Percent units: mape({99}, {100}) == 1.0. Throws std::invalid_argument when
/// an actual value is zero.
double mape(std::span<const double> predictions, std::span<const double> actuals);
/// Share of positions where "predicted > previous" agrees with
/// "actual > previous". An unchanged price is a non-rise.
double trend_accuracy(std::span<const double> previous, std::span<const double> predicted,
                      std::span<const double> actual);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitSpec {
  enum class Kind { Consecutive, Random };

  Kind kind = Kind::Consecutive;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double train_frac = 0.0;
  double val_frac = 0.0;
  double test_frac = 0.0;
  std::uint64_t seed = 0;

  static SplitSpec consecutive(std::size_t n_train, std::size_t n_test);
  /// Throws ConfigError unless the fractions are in [0, 1] and sum to 1.
  static SplitSpec random(double train_frac, double val_frac, double test_frac, std::uint64_t seed);

  /// "consecutive(44,30)" or "random(0.6,0.06,0.34)".
  std::string describe() const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Consecutive: the first n_train windows train, the last n_test test, and
/// n_train + n_test must equal `window_count`. Random: seeded shuffle of the
/// indices, then floor(train) / floor(val) / remainder. Throws ConfigError
/// when the counts cannot be honoured.
SplitIndices split(std::size_t window_count, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

enum class Protocol { Trend, Price };
std::string_view to_string(Protocol protocol) noexcept;
std::optional<Protocol> parse_protocol(std::string_view text) noexcept;

/// Everything one pair contributes to an experiment.
struct PairData {
  std::string pair;
  std::vector<DailyFeatures> days;
  bool has_explanations = false;
  /// Input digests (news, explanations, lexicon, ...) copied into results.
  std::map<std::string, std::string> provenance;
};

/// Test-set predictions in price units.
struct Predictions {
  std::vector<double> previous;
  std::vector<double> predicted;
  std::vector<double> actual;
  std::size_t train_windows = 0;
  lstm::TrainReport training;
};

/// Windows of one variant, partitioned and normalized, ready for training.
struct PreparedSplit {
  std::vector<Window> windows;
  SplitIndices indices;
  NormStats stats;  // fitted on the training windows only
  std::vector<lstm::Sample> train_set;
  std::vector<lstm::Sample> val_set;
};

/// Builds the variant's windows and splits them. A consecutive split that is
/// shorter than the window list uses the most recent windows. Throws
/// MissingArtifactError when the explanation variant lacks explanations and
/// ConfigError when there are too few windows.
PreparedSplit prepare_split(const PairData& data, Variant variant, const SplitSpec& split_spec);

/// Predicts every test window of `prepared` with `params`.
Predictions predict_test(const PreparedSplit& prepared, const lstm::LstmParams& params);

/// prepare_split, train, predict_test.
Predictions fit_and_predict(const PairData& data, Variant variant, const SplitSpec& split_spec,
                            const lstm::TrainConfig& train_config);

inline constexpr std::string_view kDegenerateTrendWarning = "degenerate-trend";

struct ExperimentResult {
  std::string pair;
  Variant variant = Variant::Baseline;
  Protocol protocol = Protocol::Trend;
  std::string split;
  std::optional<double> accuracy;  // trend protocol
  std::optional<double> mse;       // price protocol
  std::optional<double> mae;
  std::optional<double> mape;      // percent
  std::uint64_t seed = 0;
  std::map<std::string, std::string> provenance;
  std::vector<std::string> warnings;
  std::size_t train_windows = 0;
  std::size_t test_windows = 0;

  friend bool operator==(const ExperimentResult&, const ExperimentResult&) = default;
};

ExperimentResult run_experiment(const PairData& data, Variant variant, Protocol protocol,
                                const SplitSpec& split_spec, const lstm::TrainConfig& train_config);

/// Computes the protocol's metrics for already available predictions.
ExperimentResult score(const PairData& data, Variant variant, Protocol protocol, const SplitSpec& split_spec,
                       const lstm::TrainConfig& train_config, const Predictions& predictions);

std::string result_to_json(const ExperimentResult& result);
/// Throws ParseError on malformed input.
ExperimentResult result_from_json(std::string_view text);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ReportOptions {
  std::string config_digest;
  /// Adds an "Average (-PAIR)" column when the pair is among the results.
  std::optional<std::string> exclude_pair;
};

struct Report {
  std::string csv;
  std::string markdown;
};

/// CSV rows follow `pair,variant,split,metric,value,units,seed` after a
/// `# config_digest=` comment line; MAPE and accuracy are stored as
/// fractions. The Markdown has one table per (metric, split): rows are
/// variants, columns are pairs, Average and the optional exclusion average,
/// and each cell carries its rank within the column (1 = best).
/// Output is a pure function of the inputs.
Report render_report(std::span<const ExperimentResult> results, const ReportOptions& options);

struct ReportRow {
  std::string pair;
  std::string variant;
  std::string split;
  std::string metric;
  double value = 0.0;
  std::string units;
  std::uint64_t seed = 0;
};

struct ParsedReport {
  std::string config_digest;
  std::vector<ReportRow> rows;
};

/// Throws ParseError on malformed input.
ParsedReport parse_report_csv(std::string_view csv);

}  // namespace fxplain
