#include "fxplain/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "fxplain/csv.hpp"
#include "fxplain/errors.hpp"

namespace fxplain {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a == 0) throw std::invalid_argument(std::string(what) + ": empty input");
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

double mse(std::span<const double> predictions, std::span<const double> actuals) {
  check_lengths(predictions.size(), actuals.size(), "mse");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - actuals[i];
    total += r * r;
  }
  return total / static_cast<double>(predictions.size());
}

double mae(std::span<const double> predictions, std::span<const double> actuals) {
  check_lengths(predictions.size(), actuals.size(), "mae");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) total += std::abs(predictions[i] - actuals[i]);
  return total / static_cast<double>(predictions.size());
}

double mape(std::span<const double> predictions, std::span<const double> actuals) {
  check_lengths(predictions.size(), actuals.size(), "mape");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (actuals[i] == 0.0) throw std::invalid_argument("mape: actual value is zero at position " + std::to_string(i));
    total += std::abs((predictions[i] - actuals[i]) / actuals[i]);
  }
  return 100.0 * total / static_cast<double>(predictions.size());
}

double trend_accuracy(std::span<const double> previous, std::span<const double> predicted,
                      std::span<const double> actual) {
  check_lengths(previous.size(), predicted.size(), "trend_accuracy");
  check_lengths(previous.size(), actual.size(), "trend_accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < previous.size(); ++i) {
    if ((predicted[i] > previous[i]) == (actual[i] > previous[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(previous.size());
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

SplitSpec SplitSpec::consecutive(std::size_t n_train, std::size_t n_test) {
  SplitSpec s;
  s.kind = Kind::Consecutive;
  s.n_train = n_train;
  s.n_test = n_test;
  return s;
}

SplitSpec SplitSpec::random(double train_frac, double val_frac, double test_frac, std::uint64_t seed) {
  for (double f : {train_frac, val_frac, test_frac}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
  }
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  SplitSpec s;
  s.kind = Kind::Random;
  s.train_frac = train_frac;
  s.val_frac = val_frac;
  s.test_frac = test_frac;
  s.seed = seed;
  return s;
}

std::string SplitSpec::describe() const {
  if (kind == Kind::Consecutive) return "consecutive(" + std::to_string(n_train) + "," + std::to_string(n_test) + ")";
  return "random(" + fmt("%g", train_frac) + "," + fmt("%g", val_frac) + "," + fmt("%g", test_frac) + ")";
}

SplitIndices split(std::size_t window_count, const SplitSpec& spec) {
  SplitIndices out;
  if (spec.kind == SplitSpec::Kind::Consecutive) {
    if (spec.n_train == 0 || spec.n_test == 0) throw ConfigError("consecutive split needs non-empty train and test");
    if (spec.n_train + spec.n_test != window_count) {
      throw ConfigError(spec.describe() + " needs exactly " + std::to_string(spec.n_train + spec.n_test) +
                        " windows, got " + std::to_string(window_count));
    }
    out.train.resize(spec.n_train);
    std::iota(out.train.begin(), out.train.end(), std::size_t{0});
    out.test.resize(spec.n_test);
    std::iota(out.test.begin(), out.test.end(), spec.n_train);
    return out;
  }

  if (std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const auto n = static_cast<double>(window_count);
  // The epsilon keeps 0.6 * 100 from flooring to 59.
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_frac * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_frac * n + 1e-9));
  if (n_train == 0 || n_train + n_val >= window_count) {
    throw ConfigError(spec.describe() + " leaves an empty train or test set for " + std::to_string(window_count) +
                      " windows");
  }
  std::vector<std::size_t> order(window_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return out;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

std::string_view to_string(Protocol protocol) noexcept { return protocol == Protocol::Trend ? "trend" : "price"; }

std::optional<Protocol> parse_protocol(std::string_view text) noexcept {
  if (text == "trend") return Protocol::Trend;
  if (text == "price") return Protocol::Price;
  return std::nullopt;
}

PreparedSplit prepare_split(const PairData& data, Variant variant, const SplitSpec& split_spec) {
  if (variant == Variant::SentimentsExplanations && !data.has_explanations) {
    throw MissingArtifactError("no explanations for " + data.pair + "; run `fxplain explain --pair " + data.pair +
                               "` first");
  }
  PreparedSplit p;
  p.windows = build_windows(data.days, variant);
  if (split_spec.kind == SplitSpec::Kind::Consecutive) {
    const std::size_t needed = split_spec.n_train + split_spec.n_test;
    if (p.windows.size() < needed) {
      throw ConfigError(data.pair + ": " + split_spec.describe() + " needs " + std::to_string(needed) +
                        " windows but only " + std::to_string(p.windows.size()) + " are available");
    }
    if (p.windows.size() > needed) {
      spdlog::info("{}: using the last {} of {} windows for {}", data.pair, needed, p.windows.size(),
                   split_spec.describe());
      p.windows.erase(p.windows.begin(), p.windows.end() - static_cast<std::ptrdiff_t>(needed));
    }
  }
  p.indices = split(p.windows.size(), split_spec);

  std::vector<Window> train_windows;
  train_windows.reserve(p.indices.train.size());
  for (auto i : p.indices.train) train_windows.push_back(p.windows[i]);
  p.stats = fit_normalizer(train_windows);
  for (auto i : p.indices.train) p.train_set.push_back(lstm::to_sample(apply(p.stats, p.windows[i])));
  for (auto i : p.indices.val) p.val_set.push_back(lstm::to_sample(apply(p.stats, p.windows[i])));
  return p;
}

Predictions predict_test(const PreparedSplit& prepared, const lstm::LstmParams& params) {
  Predictions p;
  p.train_windows = prepared.indices.train.size();
  for (auto i : prepared.indices.test) {
    const auto& w = prepared.windows[i];
    p.previous.push_back(w.last_close);
    p.actual.push_back(w.target);
    p.predicted.push_back(lstm::predict(params, prepared.stats, w));
  }
  return p;
}

Predictions fit_and_predict(const PairData& data, Variant variant, const SplitSpec& split_spec,
                            const lstm::TrainConfig& train_config) {
  const PreparedSplit prepared = prepare_split(data, variant, split_spec);
  auto report = lstm::train(prepared.train_set, train_config, prepared.val_set);
  Predictions p = predict_test(prepared, report.params);
  p.training = std::move(report);
  return p;
}

ExperimentResult score(const PairData& data, Variant variant, Protocol protocol, const SplitSpec& split_spec,
                       const lstm::TrainConfig& train_config, const Predictions& p) {
  ExperimentResult r;
  r.pair = data.pair;
  r.variant = variant;
  r.protocol = protocol;
  r.split = split_spec.describe();
  r.seed = train_config.seed;
  r.provenance = data.provenance;
  if (split_spec.kind == SplitSpec::Kind::Random) r.provenance["split_seed"] = std::to_string(split_spec.seed);
  r.provenance["train_seed"] = std::to_string(train_config.seed);
  r.train_windows = p.train_windows;
  r.test_windows = p.actual.size();

  if (protocol == Protocol::Trend) {
    r.accuracy = trend_accuracy(p.previous, p.predicted, p.actual);
    std::size_t rises = 0;
    for (std::size_t i = 0; i < p.actual.size(); ++i) rises += p.actual[i] > p.previous[i] ? 1 : 0;
    if (rises == 0 || rises == p.actual.size()) {
      r.warnings.emplace_back(kDegenerateTrendWarning);
      spdlog::warn("{} {}: every test day moves the same way ({} rises of {}); trend accuracy is degenerate",
                   data.pair, to_string(variant), rises, p.actual.size());
    }
  } else {
    r.mse = mse(p.predicted, p.actual);
    r.mae = mae(p.predicted, p.actual);
    r.mape = mape(p.predicted, p.actual);
  }
  return r;
}

ExperimentResult run_experiment(const PairData& data, Variant variant, Protocol protocol,
                                const SplitSpec& split_spec, const lstm::TrainConfig& train_config) {
  return score(data, variant, protocol, split_spec, train_config,
               fit_and_predict(data, variant, split_spec, train_config));
}

std::string result_to_json(const ExperimentResult& r) {
  nlohmann::ordered_json j;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  j["pair"] = r.pair;
  j["variant"] = std::string(to_string(r.variant));
  j["protocol"] = std::string(to_string(r.protocol));
  j["split"] = r.split;
  j["accuracy"] = opt(r.accuracy);
  j["mse"] = opt(r.mse);
  j["mae"] = opt(r.mae);
  j["mape"] = opt(r.mape);
  j["seed"] = r.seed;
  j["provenance"] = r.provenance;
  j["warnings"] = r.warnings;
  j["train_windows"] = r.train_windows;
  j["test_windows"] = r.test_windows;
  return j.dump(1);
}

ExperimentResult result_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ExperimentResult r;
    r.pair = j.at("pair").get<std::string>();
    const auto variant = parse_variant(j.at("variant").get<std::string>());
    const auto protocol = parse_protocol(j.at("protocol").get<std::string>());
    if (!variant || !protocol) throw ParseError("unknown variant or protocol in experiment result");
    r.variant = *variant;
    r.protocol = *protocol;
    r.split = j.at("split").get<std::string>();
    auto opt = [&](const char* key) {
      return j.at(key).is_null() ? std::optional<double>{} : std::optional<double>(j.at(key).get<double>());
    };
    r.accuracy = opt("accuracy");
    r.mse = opt("mse");
    r.mae = opt("mae");
    r.mape = opt("mape");
    r.seed = j.at("seed").get<std::uint64_t>();
    r.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    r.train_windows = j.at("train_windows").get<std::size_t>();
    r.test_windows = j.at("test_windows").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed experiment result: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

struct MetricInfo {
  const char* name;
  const char* title;
  const char* units;
  bool higher_is_better;
  bool percent;
};

constexpr MetricInfo kMetrics[] = {
    {"accuracy", "Trend accuracy", "fraction", true, true},
    {"mse", "MSE", "price^2", false, false},
    {"mae", "MAE", "price", false, false},
    {"mape", "MAPE", "fraction", false, true},
};

std::optional<double> metric_value(const ExperimentResult& r, std::string_view metric) {
  if (metric == "accuracy") return r.accuracy;
  if (metric == "mse") return r.mse;
  if (metric == "mae") return r.mae;
  if (metric == "mape") return r.mape ? std::optional(*r.mape / 100.0) : std::nullopt;
  return std::nullopt;
}

std::string variant_title(Variant v) {
  switch (v) {
    case Variant::Baseline: return "LSTM";
    case Variant::Sentiments: return "LSTM+Sentiments";
    case Variant::SentimentsExplanations: return "LSTM+Sentiments+Explanations";
  }
  return "LSTM";
}

std::string format_cell(const MetricInfo& m, double value) {
  return m.percent ? fmt("%.2f%%", 100.0 * value) : fmt("%.6g", value);
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Dense ranking within one column, 1 = best.
std::vector<int> ranks(const std::vector<std::optional<double>>& column, bool higher_is_better) {
  std::set<double> distinct;
  for (const auto& v : column) {
    if (v) distinct.insert(*v);
  }
  std::vector<double> ordered(distinct.begin(), distinct.end());
  if (higher_is_better) std::reverse(ordered.begin(), ordered.end());
  std::vector<int> out;
  for (const auto& v : column) {
    if (!v) {
      out.push_back(0);
      continue;
    }
    out.push_back(static_cast<int>(std::find(ordered.begin(), ordered.end(), *v) - ordered.begin()) + 1);
  }
  return out;
}

}  // namespace

Report render_report(std::span<const ExperimentResult> results, const ReportOptions& options) {
  Report report;
  report.csv = "# config_digest=" + options.config_digest + "\n";
  report.csv += "pair,variant,split,metric,value,units,seed\n";
  for (const auto& r : results) {
    for (const auto& m : kMetrics) {
      const auto v = metric_value(r, m.name);
      if (!v) continue;
      report.csv += csv::join({r.pair, std::string(to_string(r.variant)), r.split, m.name, fmt("%.17g", *v), m.units,
                               std::to_string(r.seed)});
      report.csv += '\n';
    }
  }

  std::string& md = report.markdown;
  md = "# Experiment report\n\nconfig digest: `" + options.config_digest + "`\n";

  std::vector<std::string> splits;
  std::vector<std::string> pairs;
  std::vector<Variant> variants;
  for (const auto& r : results) {
    if (std::find(splits.begin(), splits.end(), r.split) == splits.end()) splits.push_back(r.split);
    if (std::find(pairs.begin(), pairs.end(), r.pair) == pairs.end()) pairs.push_back(r.pair);
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
  }
  std::sort(variants.begin(), variants.end());
  const bool with_exclusion = options.exclude_pair &&
                              std::find(pairs.begin(), pairs.end(), *options.exclude_pair) != pairs.end() &&
                              pairs.size() > 1;

  for (const auto& m : kMetrics) {
    for (const auto& sp : splits) {
      // cell[variant][pair] = mean over seeds
      std::vector<std::vector<std::optional<double>>> cell(variants.size(),
                                                           std::vector<std::optional<double>>(pairs.size()));
      bool any = false;
      for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
          std::vector<double> values;
          for (const auto& r : results) {
            if (r.variant != variants[vi] || r.pair != pairs[pi] || r.split != sp) continue;
            if (const auto v = metric_value(r, m.name)) values.push_back(*v);
          }
          if (!values.empty()) {
            cell[vi][pi] = mean_of(values);
            any = true;
          }
        }
      }
      if (!any) continue;

      std::vector<std::string> headers = pairs;
      headers.emplace_back("Average");
      if (with_exclusion) headers.push_back("Average (-" + *options.exclude_pair + ")");
      std::vector<std::vector<std::optional<double>>> table(variants.size());
      for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        table[vi] = cell[vi];
        std::vector<double> all, rest;
        for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
          if (!cell[vi][pi]) continue;
          all.push_back(*cell[vi][pi]);
          if (!with_exclusion || pairs[pi] != *options.exclude_pair) rest.push_back(*cell[vi][pi]);
        }
        table[vi].push_back(all.empty() ? std::nullopt : std::optional(mean_of(all)));
        if (with_exclusion) table[vi].push_back(rest.empty() ? std::nullopt : std::optional(mean_of(rest)));
      }

      std::vector<std::vector<int>> col_ranks(headers.size());
      for (std::size_t c = 0; c < headers.size(); ++c) {
        std::vector<std::optional<double>> column;
        for (const auto& row : table) column.push_back(row[c]);
        col_ranks[c] = ranks(column, m.higher_is_better);
      }

      md += "\n## " + std::string(m.title) + ", " + sp + "\n\n| Model |";
      for (const auto& h : headers) md += " " + h + " |";
      md += "\n|---|";
      for (std::size_t c = 0; c < headers.size(); ++c) md += "---:|";
      md += '\n';
      for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        md += "| " + variant_title(variants[vi]) + " |";
        for (std::size_t c = 0; c < headers.size(); ++c) {
          const auto& v = table[vi][c];
          md += v ? " " + format_cell(m, *v) + " (#" + std::to_string(col_ranks[c][vi]) + ") |" : " n/a |";
        }
        md += '\n';
      }
    }
  }

  std::vector<std::string> warned;
  for (const auto& r : results) {
    for (const auto& w : r.warnings) warned.push_back(r.pair + " " + std::string(to_string(r.variant)) + ": " + w);
  }
  if (!warned.empty()) {
    md += "\n## Warnings\n\n";
    for (const auto& w : warned) md += "- " + w + "\n";
  }
  md += "\nRanks (#1 = best) are per column. Averages are unweighted means across pairs.\n";
  return report;
}

ParsedReport parse_report_csv(std::string_view text) {
  ParsedReport out;
  std::string body(text);
  constexpr std::string_view kDigest = "# config_digest=";
  if (body.rfind(kDigest, 0) == 0) {
    const auto eol = body.find('\n');
    out.config_digest = body.substr(kDigest.size(), eol - kDigest.size());
    body.erase(0, eol == std::string::npos ? body.size() : eol + 1);
  }
  std::istringstream in(body);
  const auto rows = csv::read(in);
  if (rows.empty()) throw ParseError("report CSV has no header");
  const csv::Row expected{"pair", "variant", "split", "metric", "value", "units", "seed"};
  if (rows.front() != expected) throw ParseError("unexpected report CSV header", 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != expected.size()) throw ParseError("report row has the wrong number of fields", i + 1);
    ReportRow r;
    r.pair = row[0];
    r.variant = row[1];
    r.split = row[2];
    r.metric = row[3];
    r.units = row[5];
    try {
      std::size_t used = 0;
      r.value = std::stod(row[4], &used);
      if (used != row[4].size()) throw std::invalid_argument("trailing characters");
      r.seed = std::stoull(row[6], &used);
      if (used != row[6].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ParseError("non-numeric value or seed in report", i + 1);
    }
    out.rows.push_back(std::move(r));
  }
  return out;
}

}  // namespace fxplain
