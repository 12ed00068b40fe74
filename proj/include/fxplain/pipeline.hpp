#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fxplain/eval.hpp"
#include "fxplain/explain.hpp"
#include "fxplain/ingest.hpp"
#include "fxplain/lstm.hpp"

namespace fxplain::pipeline {

namespace fs = std::filesystem;

struct BackendConfig {
  std::string id = "mock";  // mock | constant | openai | watsonx
  std::string model_id;     // empty: the backend's default model
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 64;
  double requests_per_second = 0.0;  // 0 disables rate limiting
  int max_retries = 4;
  std::string cache_file = "cache/llm_responses.jsonl";  // relative to workdir
  std::string constant_response;                         // for the constant backend
  std::uint64_t seed = 0;                                // mock tie-breaking
};

/// Declarative experiment manifest. Relative paths in the file are resolved
/// against the directory of the config file.
struct RunConfig {
  fs::path prices_dir;
  fs::path news_file;
  fs::path workdir;
  std::vector<std::string> pairs;
  std::optional<fs::path> lexicon_file;  // built-in lexicon when absent
  double neutral_band = 0.5;
  ExplainConfig explain;
  BackendConfig backend;
  std::size_t embedding_dim = 64;
  std::uint64_t embedding_seed = 0;
  std::string sentiment_source = "auto";  // auto | gold | model
  lstm::TrainConfig train;
  std::vector<SplitSpec> trend_splits{SplitSpec::consecutive(44, 30), SplitSpec::consecutive(60, 14)};
  SplitSpec price_split = SplitSpec::random(0.60, 0.06, 0.34, 0);
  std::optional<std::string> average_exclude = std::string("USDJPY");
  std::optional<Date> date_from;
  std::optional<Date> date_to;

  /// Paths exactly as written in the file; they enter the digest instead of
  /// the resolved ones so the digest does not depend on the checkout location.
  std::map<std::string, std::string> path_text;

  /// Canonical JSON of every field that influences results.
  std::string canonical_json() const;
  /// SHA-256 hex of canonical_json().
  std::string digest() const;
};

/// Throws ConfigError on unknown keys, wrong types or out-of-range values.
RunConfig parse_config(const std::string& json_text, const fs::path& base_dir);
RunConfig load_config(const fs::path& path);

/// Command-line overrides layered over the file.
struct Overrides {
  std::optional<std::string> pair;
  std::optional<std::string> backend;
  std::optional<std::uint64_t> seed;
};
void apply_overrides(RunConfig& config, const Overrides& overrides);

/// Throws ConfigError when an input path is missing or the pair list is empty.
void check_inputs(const RunConfig& config, bool needs_news);

/// `<PAIR>.csv` or Yahoo's `<PAIR>=X.csv` inside the prices directory.
/// Throws ConfigError naming the pair when neither exists.
fs::path price_file(const RunConfig& config, const std::string& pair);

// ---------------------------------------------------------------------------
// Subcommands. Each returns a summary and prints a human-readable one to `out`.
// ---------------------------------------------------------------------------

struct PairStats {
  std::string pair;
  std::size_t observations = 0;
  PriceStats stats;
};
/// Writes workdir/reports/stats.csv.
std::vector<PairStats> cmd_stats(const RunConfig& config, std::ostream& out);

struct ExplainSummary {
  std::size_t items = 0;
  std::size_t sufficient = 0;
  std::size_t failed = 0;
  std::map<int, std::size_t> attempts_histogram;
  std::size_t backend_calls = 0;  // calls that missed the response cache
  std::vector<fs::path> outputs;
};
/// Writes workdir/<pair>/explain/<digest>.jsonl per pair.
ExplainSummary cmd_explain(const RunConfig& config, std::ostream& out, int jobs = 1);

/// Writes workdir/<pair>/features/<digest>.csv per pair. Explanation
/// embeddings are included when the explain stage has run, else zero.
std::vector<fs::path> cmd_enrich(const RunConfig& config, Variant variant, std::ostream& out, int jobs = 1);

/// Trains one model per pair and split of the protocol and writes
/// workdir/<pair>/model/<digest>.json.
std::vector<fs::path> cmd_train(const RunConfig& config, Variant variant, Protocol protocol, std::ostream& out,
                                int jobs = 1);

struct RunOutputs {
  std::vector<ExperimentResult> results;
  fs::path csv;
  fs::path markdown;
};
/// Features, training (reusing checkpoints), evaluation and the report
/// workdir/reports/<protocol>-<variant>.{csv,md}.
RunOutputs cmd_run(const RunConfig& config, Variant variant, Protocol protocol, std::ostream& out, int jobs = 1);

/// Collects every stored evaluation for the protocol across variants into
/// workdir/reports/<protocol>.{csv,md}. Throws MissingArtifactError when
/// nothing has been evaluated yet.
RunOutputs cmd_report(const RunConfig& config, Protocol protocol, std::ostream& out);

}  // namespace fxplain::pipeline
