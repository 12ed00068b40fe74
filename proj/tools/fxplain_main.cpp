#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "fxplain/errors.hpp"
#include "fxplain/pipeline.hpp"

namespace {

using namespace fxplain;

struct Options {
  std::string config = "fxplain.json";
  std::optional<std::string> pair;
  std::string variant = "baseline";
  std::string protocol = "trend";
  std::optional<std::string> backend;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool verbose = false;
};

pipeline::RunConfig load(const Options& o) {
  auto config = pipeline::load_config(o.config);
  pipeline::apply_overrides(config, {o.pair, o.backend, o.seed});
  return config;
}

Variant variant_of(const Options& o) {
  const auto v = parse_variant(o.variant);
  if (!v) throw ConfigError("unknown variant '" + o.variant + "'");
  return *v;
}

Protocol protocol_of(const Options& o) {
  const auto p = parse_protocol(o.protocol);
  if (!p) throw ConfigError("unknown protocol '" + o.protocol + "'");
  return *p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable sentiment features for FX forecasting"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Run configuration (JSON)")->capture_default_str();
  app.add_option("--pair", o.pair, "Restrict to one currency pair");
  app.add_option("--backend", o.backend, "LLM backend")->check(CLI::IsMember({"mock", "constant", "openai", "watsonx"}));
  app.add_option("--seed", o.seed, "Training and split seed");
  app.add_option("--jobs", o.jobs, "Pairs processed in parallel")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("-v,--verbose", o.verbose, "Debug logging");

  auto* stats = app.add_subcommand("stats", "Closing price statistics per pair");
  auto* explain = app.add_subcommand("explain", "Extract k-sufficient explanations for every news item");
  auto* enrich = app.add_subcommand("enrich", "Export daily feature tables");
  auto* train = app.add_subcommand("train", "Train and checkpoint models");
  auto* run = app.add_subcommand("run", "Train, evaluate and write a report");
  auto* report = app.add_subcommand("report", "Aggregate stored evaluations into one report");

  const auto variants = CLI::IsMember({"baseline", "sentiments", "explanations", "sentiments+explanations"});
  const auto protocols = CLI::IsMember({"trend", "price"});
  for (auto* sub : {enrich, train, run}) sub->add_option("--variant", o.variant, "Feature set")->check(variants);
  for (auto* sub : {train, run, report}) sub->add_option("--protocol", o.protocol, "Evaluation protocol")->check(protocols);
  enrich->get_option("--variant")->default_str("sentiments+explanations");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (*stats) {
      pipeline::cmd_stats(load(o), std::cout);
    } else if (*explain) {
      pipeline::cmd_explain(load(o), std::cout, o.jobs);
    } else if (*enrich) {
      if (enrich->get_option("--variant")->count() == 0) o.variant = "sentiments+explanations";
      pipeline::cmd_enrich(load(o), variant_of(o), std::cout, o.jobs);
    } else if (*train) {
      pipeline::cmd_train(load(o), variant_of(o), protocol_of(o), std::cout, o.jobs);
    } else if (*run) {
      pipeline::cmd_run(load(o), variant_of(o), protocol_of(o), std::cout, o.jobs);
    } else if (*report) {
      pipeline::cmd_report(load(o), protocol_of(o), std::cout);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
