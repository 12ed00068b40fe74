#include "fxplain/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "fxplain/errors.hpp"
#include "fxplain/features.hpp"
#include "fxplain/hashing.hpp"
#include "fxplain/llm_client.hpp"
#include "fxplain/sentiment.hpp"

namespace fxplain::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  // Write-then-rename keeps readers from ever seeing half an artifact.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string short_digest(const std::string& hex) { return hex.substr(0, 16); }

}  // namespace

std::string RunConfig::canonical_json() const {
  ordered_json j;
  ordered_json paths;
  for (const auto& [k, v] : path_text) {
    if (k != "workdir") paths[k] = v;
  }
  j["paths"] = paths;
  j["pairs"] = pairs;
  j["lexicon"] = {{"neutral_band", format_double(neutral_band)}};
  j["explain"] = {{"k", explain.k}, {"max_attempts", explain.max_attempts},
                  {"require_minimality", explain.require_minimality}};
  j["backend"] = {{"id", backend.id},
                  {"model_id", backend.model_id},
                  {"temperature", format_double(backend.temperature)},
                  {"top_p", format_double(backend.top_p)},
                  {"max_tokens", backend.max_tokens},
                  {"constant_response", backend.constant_response},
                  {"seed", backend.seed}};
  j["features"] = {{"embedding_dim", embedding_dim},
                   {"embedding_seed", embedding_seed},
                   {"sentiment_source", sentiment_source}};
  j["training"] = {{"hidden", train.hidden},
                   {"learning_rate", format_double(train.learning_rate)},
                   {"epochs", train.epochs},
                   {"batch_size", train.batch_size},
                   {"seed", train.seed},
                   {"optimizer", train.optimizer == lstm::TrainConfig::Optimizer::Adam ? "adam" : "sgd"},
                   {"gradient_clip", train.gradient_clip ? format_double(*train.gradient_clip) : "none"},
                   {"early_stop_patience", train.early_stop_patience ? *train.early_stop_patience : 0},
                   {"forget_bias", format_double(train.forget_bias)}};
  ordered_json trend = ordered_json::array();
  for (const auto& s : trend_splits) trend.push_back(s.describe());
  j["splits"] = {{"trend", trend}, {"price", price_split.describe()}, {"price_seed", price_split.seed}};
  j["report"] = {{"average_exclude", average_exclude.value_or("")}};
  j["dates"] = {{"from", date_from ? format_date(*date_from) : ""}, {"to", date_to ? format_date(*date_to) : ""}};
  return j.dump();
}

std::string RunConfig::digest() const { return sha256_hex(canonical_json()); }

RunConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"paths", "pairs", "lexicon", "explain", "backend", "features", "training", "splits", "report", "dates"},
             "");
  RunConfig c;
  auto resolve = [&](const std::string& text) {
    const fs::path p(text);
    return p.is_absolute() ? p : (base_dir / p).lexically_normal();
  };

  if (!j.contains("paths")) throw ConfigError("config needs a 'paths' section");
  const auto& paths = j.at("paths");
  check_keys(paths, {"prices_dir", "news_file", "workdir"}, "paths");
  for (const char* key : {"prices_dir", "workdir"}) {
    if (!paths.contains(key)) throw ConfigError(std::string("config needs paths.") + key);
  }
  std::string text;
  read(paths, "prices_dir", text, "paths");
  c.path_text["prices_dir"] = text;
  c.prices_dir = resolve(text);
  read(paths, "workdir", text, "paths");
  c.path_text["workdir"] = text;
  c.workdir = resolve(text);
  if (paths.contains("news_file")) {
    read(paths, "news_file", text, "paths");
    c.path_text["news_file"] = text;
    c.news_file = resolve(text);
  }

  read(j, "pairs", c.pairs, "");
  for (const auto& p : c.pairs) {
    if (!is_pair_code(p)) throw ConfigError("bad currency pair code '" + p + "' in config");
  }

  if (j.contains("lexicon")) {
    const auto& lx = j.at("lexicon");
    check_keys(lx, {"file", "neutral_band"}, "lexicon");
    if (lx.contains("file") && !lx.at("file").is_null()) {
      read(lx, "file", text, "lexicon");
      c.path_text["lexicon_file"] = text;
      c.lexicon_file = resolve(text);
    }
    read(lx, "neutral_band", c.neutral_band, "lexicon");
    if (!(c.neutral_band >= 0.0)) throw ConfigError("lexicon.neutral_band must be non-negative");
  }

  if (j.contains("explain")) {
    const auto& ex = j.at("explain");
    check_keys(ex, {"k", "max_attempts", "require_minimality"}, "explain");
    read(ex, "k", c.explain.k, "explain");
    read(ex, "max_attempts", c.explain.max_attempts, "explain");
    read(ex, "require_minimality", c.explain.require_minimality, "explain");
  }
  c.explain.validate();

  if (j.contains("backend")) {
    const auto& b = j.at("backend");
    check_keys(b, {"id", "model_id", "temperature", "top_p", "max_tokens", "requests_per_second", "max_retries",
                   "cache_file", "constant_response", "seed"},
               "backend");
    read(b, "id", c.backend.id, "backend");
    read(b, "model_id", c.backend.model_id, "backend");
    read(b, "temperature", c.backend.temperature, "backend");
    read(b, "top_p", c.backend.top_p, "backend");
    read(b, "max_tokens", c.backend.max_tokens, "backend");
    read(b, "requests_per_second", c.backend.requests_per_second, "backend");
    read(b, "max_retries", c.backend.max_retries, "backend");
    read(b, "cache_file", c.backend.cache_file, "backend");
    read(b, "constant_response", c.backend.constant_response, "backend");
    read(b, "seed", c.backend.seed, "backend");
  }
  static const std::set<std::string> kBackends{"mock", "constant", "openai", "watsonx"};
  if (!kBackends.count(c.backend.id)) throw ConfigError("unknown backend '" + c.backend.id + "'");
  if (c.backend.max_retries < 0) throw ConfigError("backend.max_retries must be non-negative");
  LlmRequest probe;
  probe.prompt = "-";
  probe.temperature = c.backend.temperature;
  probe.top_p = c.backend.top_p;
  probe.max_tokens = c.backend.max_tokens;
  probe.validate();

  if (j.contains("features")) {
    const auto& f = j.at("features");
    check_keys(f, {"embedding_dim", "embedding_seed", "sentiment_source"}, "features");
    read(f, "embedding_dim", c.embedding_dim, "features");
    read(f, "embedding_seed", c.embedding_seed, "features");
    read(f, "sentiment_source", c.sentiment_source, "features");
  }
  if (c.embedding_dim == 0) throw ConfigError("features.embedding_dim must be positive");
  if (c.sentiment_source != "auto" && c.sentiment_source != "gold" && c.sentiment_source != "model") {
    throw ConfigError("features.sentiment_source must be auto, gold or model");
  }

  if (j.contains("training")) {
    const auto& t = j.at("training");
    check_keys(t, {"hidden", "learning_rate", "epochs", "batch_size", "seed", "optimizer", "gradient_clip",
                   "early_stop_patience", "forget_bias"},
               "training");
    read(t, "hidden", c.train.hidden, "training");
    read(t, "learning_rate", c.train.learning_rate, "training");
    read(t, "epochs", c.train.epochs, "training");
    read(t, "batch_size", c.train.batch_size, "training");
    read(t, "seed", c.train.seed, "training");
    read(t, "forget_bias", c.train.forget_bias, "training");
    std::string optimizer = "adam";
    read(t, "optimizer", optimizer, "training");
    if (optimizer == "adam") {
      c.train.optimizer = lstm::TrainConfig::Optimizer::Adam;
    } else if (optimizer == "sgd") {
      c.train.optimizer = lstm::TrainConfig::Optimizer::Sgd;
    } else {
      throw ConfigError("training.optimizer must be adam or sgd");
    }
    if (t.contains("gradient_clip")) {
      c.train.gradient_clip =
          t.at("gradient_clip").is_null() ? std::nullopt : std::optional(t.at("gradient_clip").get<double>());
    }
    if (t.contains("early_stop_patience")) {
      c.train.early_stop_patience = t.at("early_stop_patience").is_null()
                                        ? std::nullopt
                                        : std::optional(t.at("early_stop_patience").get<int>());
    }
  }
  c.train.validate();

  if (j.contains("splits")) {
    const auto& s = j.at("splits");
    check_keys(s, {"trend", "price"}, "splits");
    if (s.contains("trend")) {
      std::vector<std::array<std::size_t, 2>> trend;
      read(s, "trend", trend, "splits");
      c.trend_splits.clear();
      for (const auto& [tr, te] : trend) c.trend_splits.push_back(SplitSpec::consecutive(tr, te));
    }
    if (s.contains("price")) {
      const auto& p = s.at("price");
      check_keys(p, {"train", "val", "test", "seed"}, "splits.price");
      double tr = 0.6, va = 0.06, te = 0.34;
      std::uint64_t seed = 0;
      read(p, "train", tr, "splits.price");
      read(p, "val", va, "splits.price");
      read(p, "test", te, "splits.price");
      read(p, "seed", seed, "splits.price");
      c.price_split = SplitSpec::random(tr, va, te, seed);
    }
  }

  if (j.contains("report")) {
    const auto& r = j.at("report");
    check_keys(r, {"average_exclude"}, "report");
    if (r.contains("average_exclude")) {
      c.average_exclude =
          r.at("average_exclude").is_null() ? std::nullopt : std::optional(r.at("average_exclude").get<std::string>());
    }
  }

  if (j.contains("dates")) {
    const auto& d = j.at("dates");
    check_keys(d, {"from", "to"}, "dates");
    for (const char* key : {"from", "to"}) {
      if (!d.contains(key) || d.at(key).is_null()) continue;
      const auto date = parse_date(d.at(key).get<std::string>());
      if (!date) throw ConfigError(std::string("dates.") + key + " is not YYYY-MM-DD");
      (std::string(key) == "from" ? c.date_from : c.date_to) = date;
    }
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file " + path.string() + " does not exist");
  return parse_config(read_file(path), path.parent_path());
}

void apply_overrides(RunConfig& config, const Overrides& o) {
  if (o.pair) {
    if (!is_pair_code(*o.pair)) throw ConfigError("bad currency pair code '" + *o.pair + "'");
    config.pairs = {*o.pair};
  }
  if (o.backend) {
    if (*o.backend != "mock" && *o.backend != "openai" && *o.backend != "watsonx" && *o.backend != "constant") {
      throw ConfigError("unknown backend '" + *o.backend + "'");
    }
    if (*o.backend != config.backend.id) config.backend.model_id.clear();
    config.backend.id = *o.backend;
  }
  if (o.seed) {
    config.train.seed = *o.seed;
    config.price_split.seed = *o.seed;
  }
}

void check_inputs(const RunConfig& config, bool needs_news) {
  if (config.pairs.empty()) throw ConfigError("config lists no pairs");
  if (!fs::is_directory(config.prices_dir)) {
    throw ConfigError("prices directory " + config.prices_dir.string() + " does not exist");
  }
  if (needs_news && (config.news_file.empty() || !fs::exists(config.news_file))) {
    throw ConfigError("news file " + config.news_file.string() + " does not exist");
  }
  if (config.lexicon_file && !fs::exists(*config.lexicon_file)) {
    throw ConfigError("lexicon file " + config.lexicon_file->string() + " does not exist");
  }
}

fs::path price_file(const RunConfig& config, const std::string& pair) {
  for (const auto& name : {pair + ".csv", pair + "=X.csv"}) {
    const auto p = config.prices_dir / name;
    if (fs::exists(p)) return p;
  }
  throw ConfigError("no price file for " + pair + " in " + config.prices_dir.string() + " (expected " + pair +
                    ".csv or " + pair + "=X.csv)");
}

// ---------------------------------------------------------------------------
// Stage plumbing
// ---------------------------------------------------------------------------

namespace {

bool in_range(const RunConfig& c, const Date& d) {
  const auto day = std::chrono::sys_days(d);
  if (c.date_from && day < std::chrono::sys_days(*c.date_from)) return false;
  if (c.date_to && day > std::chrono::sys_days(*c.date_to)) return false;
  return true;
}

struct PairInputs {
  std::string pair;
  std::vector<PriceBar> bars;
  std::vector<NewsItem> news;
  std::string prices_digest;
  std::string news_digest;
};

std::vector<PriceBar> load_bars(const RunConfig& c, const std::string& pair, std::string* digest) {
  const auto path = price_file(c, pair);
  if (digest) *digest = sha256_hex(read_file(path));
  auto load = load_prices_csv(path.string());
  std::vector<PriceBar> bars;
  for (auto& b : load.bars) {
    if (in_range(c, b.date)) bars.push_back(std::move(b));
  }
  if (bars.empty()) throw ParseError(path.string() + ": no prices inside the configured date range");
  return bars;
}

std::string news_digest(const std::vector<NewsItem>& news) {
  std::string canon;
  for (const auto& n : news) {
    canon += n.id + '\x1f' + format_date(n.date) + '\x1f' + n.text + '\x1f' +
             (n.label ? std::string(to_string(*n.label)) : "") + '\x1e';
  }
  return sha256_hex(canon);
}

/// Shared, read-only state for one command invocation.
struct Context {
  const RunConfig& config;
  LexiconModel lexicon;
  std::vector<NewsItem> all_news;
  bool has_news = false;

  explicit Context(const RunConfig& c, bool needs_news) : config(c) {
    check_inputs(c, needs_news);
    lexicon = c.lexicon_file ? load_lexicon(c.lexicon_file->string(), c.neutral_band) : default_lexicon(c.neutral_band);
    if (!c.news_file.empty() && fs::exists(c.news_file)) {
      all_news = load_news_csv(c.news_file.string());
      has_news = true;
    }
  }

  PairInputs inputs(const std::string& pair) const {
    PairInputs in;
    in.pair = pair;
    in.bars = load_bars(config, pair, &in.prices_digest);
    for (const auto& n : all_news) {
      if (n.pair == pair && in_range(config, n.date)) in.news.push_back(n);
    }
    in.news_digest = news_digest(in.news);
    return in;
  }

  fs::path stage_dir(const std::string& pair, const char* stage) const { return config.workdir / pair / stage; }
};

std::string default_model(const std::string& backend) {
  if (backend == "openai") return "gpt-4";
  if (backend == "watsonx") return "ibm/granite-13b-chat-v2";
  return backend == "mock" ? "mock-lexicon" : "constant";
}

LlmRequest request_template(const RunConfig& c) {
  LlmRequest r;
  r.model_id = c.backend.model_id.empty() ? default_model(c.backend.id) : c.backend.model_id;
  r.temperature = c.backend.temperature;
  r.top_p = c.backend.top_p;
  r.max_tokens = c.backend.max_tokens;
  return r;
}

/// Identity of the backend as it enters artifact digests; no secrets.
std::string backend_key(const Context& ctx) {
  const auto& b = ctx.config.backend;
  if (b.id == "mock") return "mock:" + short_digest(ctx.lexicon.digest()) + ":" + std::to_string(b.seed);
  if (b.id == "constant") return "constant:" + short_digest(sha256_hex(b.constant_response));
  return b.id;
}

std::unique_ptr<LlmBackend> make_backend(const Context& ctx) {
  const auto& b = ctx.config.backend;
  if (b.id == "mock") return std::make_unique<MockLexiconBackend>(ctx.lexicon, b.seed);
  if (b.id == "constant") return std::make_unique<ConstantBackend>(b.constant_response);
  HttpSettings settings;
  settings.retry.max_retries = b.max_retries;
  settings.limiter = std::make_shared<RateLimiter>(b.requests_per_second);
  if (b.id == "openai") return OpenAiBackend::from_env(settings);
  return WatsonxBackend::from_env(settings);
}

/// Forwards to another backend and counts the calls that reach it.
class CountingBackend final : public LlmBackend {
 public:
  explicit CountingBackend(LlmBackend& inner) : inner_(inner) {}
  std::string complete(const LlmRequest& request) override {
    ++calls_;
    return inner_.complete(request);
  }
  std::string id() const override { return inner_.id(); }
  std::size_t calls() const noexcept { return calls_; }

 private:
  LlmBackend& inner_;
  std::atomic<std::size_t> calls_{0};
};

std::string explain_digest(const Context& ctx, const PairInputs& in) {
  const auto& c = ctx.config;
  const auto req = request_template(c);
  ordered_json j = {{"stage", "explain"},
                    {"news", in.news_digest},
                    {"k", c.explain.k},
                    {"max_attempts", c.explain.max_attempts},
                    {"require_minimality", c.explain.require_minimality},
                    {"backend", backend_key(ctx)},
                    {"model_id", req.model_id},
                    {"temperature", format_double(req.temperature)},
                    {"top_p", format_double(req.top_p)},
                    {"max_tokens", req.max_tokens},
                    {"lexicon", ctx.lexicon.digest()}};
  return sha256_hex(j.dump());
}

fs::path explain_path(const Context& ctx, const PairInputs& in) {
  return ctx.stage_dir(in.pair, "explain") / (short_digest(explain_digest(ctx, in)) + ".jsonl");
}

std::optional<std::vector<ExplanationRecord>> load_explanations(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  std::ifstream in(path, std::ios::binary);
  std::vector<ExplanationRecord> records;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    try {
      records.push_back(parse_explanation_record(line));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what(), row);
    }
  }
  return records;
}

SentimentLabel label_for(const Context& ctx, const NewsItem& item) {
  const auto& source = ctx.config.sentiment_source;
  if (source == "gold" || (source == "auto" && item.label)) {
    if (!item.label) throw ConfigError("news " + item.id + " has no gold label but features.sentiment_source is gold");
    return *item.label;
  }
  return ctx.lexicon.classify(item.text);
}

struct FeatureSet {
  PairData data;
  std::string digest;
  fs::path path;
};

FeatureSet build_features(const Context& ctx, const PairInputs& in, bool with_explanations) {
  const auto& c = ctx.config;
  std::optional<std::vector<ExplanationRecord>> records;
  std::string expl_digest;
  if (with_explanations) {
    const auto path = explain_path(ctx, in);
    records = load_explanations(path);
    if (!records) {
      throw MissingArtifactError("no explanations for " + in.pair + " at " + path.string() + "; run `fxplain explain" +
                                 " --pair " + in.pair + "` first");
    }
    expl_digest = explain_digest(ctx, in);
  }

  const HashEmbedding embedding(c.embedding_dim, c.embedding_seed);
  ordered_json j = {{"stage", "features"},
                    {"prices", in.prices_digest},
                    {"news", in.news_digest},
                    {"lexicon", ctx.lexicon.digest()},
                    {"sentiment_source", c.sentiment_source},
                    {"embedding", embedding.id()},
                    {"explanations", expl_digest},
                    {"from", c.date_from ? format_date(*c.date_from) : ""},
                    {"to", c.date_to ? format_date(*c.date_to) : ""}};
  FeatureSet fs_out;
  fs_out.digest = sha256_hex(j.dump());
  fs_out.path = ctx.stage_dir(in.pair, "features") / (short_digest(fs_out.digest) + ".csv");

  std::map<std::string, Explanation> by_id;
  if (records) {
    for (const auto& r : *records) {
      if (!r.sufficient) continue;
      Explanation e;
      e.terms = r.terms;
      e.target_sentiment = r.sentiment;
      e.attempts_used = r.attempts;
      e.sufficient = true;
      e.minimal = r.minimal;
      by_id.emplace(r.news_id, std::move(e));
    }
  }

  const auto aligned = align_by_date(in.news, in.bars);
  auto& data = fs_out.data;
  data.pair = in.pair;
  data.has_explanations = with_explanations;
  data.days.reserve(aligned.days.size());
  for (const auto& day : aligned.days) {
    DayInputs di{&day, {}, {}};
    for (const auto& n : day.news) {
      di.labels.push_back(label_for(ctx, n));
      if (const auto it = by_id.find(n.id); it != by_id.end()) di.explanations.push_back(it->second);
    }
    data.days.push_back(make_daily_features(di, embedding));
  }
  data.provenance = {{"prices_sha256", in.prices_digest},
                     {"news_sha256", in.news_digest},
                     {"lexicon", ctx.lexicon.id()},
                     {"features", short_digest(fs_out.digest)},
                     {"embedding", embedding.id()}};
  if (with_explanations) data.provenance["explanations"] = short_digest(expl_digest);

  if (!fs::exists(fs_out.path)) write_file(fs_out.path, features_to_csv(data.days));
  return fs_out;
}

std::string model_digest(const RunConfig& c, const FeatureSet& features, Variant variant, const SplitSpec& split) {
  ordered_json j = {{"stage", "model"},
                    {"features", features.digest},
                    {"variant", std::string(to_string(variant))},
                    {"split", split.describe()},
                    {"split_seed", split.kind == SplitSpec::Kind::Random ? split.seed : 0},
                    {"hidden", c.train.hidden},
                    {"learning_rate", format_double(c.train.learning_rate)},
                    {"epochs", c.train.epochs},
                    {"batch_size", c.train.batch_size},
                    {"seed", c.train.seed},
                    {"optimizer", c.train.optimizer == lstm::TrainConfig::Optimizer::Adam ? "adam" : "sgd"},
                    {"gradient_clip", c.train.gradient_clip ? format_double(*c.train.gradient_clip) : "none"},
                    {"early_stop_patience", c.train.early_stop_patience.value_or(0)},
                    {"forget_bias", format_double(c.train.forget_bias)}};
  return sha256_hex(j.dump());
}

std::vector<SplitSpec> protocol_splits(const RunConfig& c, Protocol protocol) {
  return protocol == Protocol::Trend ? c.trend_splits : std::vector<SplitSpec>{c.price_split};
}

/// Loads the checkpoint for this model digest, or trains and stores one.
lstm::LstmParams trained_model(const Context& ctx, const FeatureSet& features, Variant variant,
                               const SplitSpec& split, const PreparedSplit& prepared, std::ostream* log) {
  const auto digest = model_digest(ctx.config, features, variant, split);
  const auto path = ctx.stage_dir(features.data.pair, "model") / (short_digest(digest) + ".json");
  if (fs::exists(path)) {
    auto cp = lstm::load_checkpoint(path.string());
    if (cp.norm_stats.mean == prepared.stats.mean && cp.norm_stats.stdev == prepared.stats.stdev) return cp.params;
    spdlog::warn("checkpoint {} does not match its inputs; retraining", path.string());
  }
  spdlog::info("{}: training {} on {} ({} windows)", features.data.pair, to_string(variant), split.describe(),
               prepared.train_set.size());
  const auto report = lstm::train(prepared.train_set, ctx.config.train, prepared.val_set);
  lstm::Checkpoint cp{report.params, prepared.stats, ctx.config.train, std::string(to_string(variant))};
  fs::create_directories(path.parent_path());
  lstm::save_checkpoint(path.string(), cp);
  if (log) {
    *log << features.data.pair << " " << to_string(variant) << " " << split.describe() << ": trained "
         << report.train_loss.size() << " epochs, selected epoch " << report.selected_epoch << " -> " << path.string()
         << "\n";
  }
  return report.params;
}

fs::path eval_path(const Context& ctx, const FeatureSet& features, Variant variant, const SplitSpec& split,
                   Protocol protocol) {
  const auto digest = sha256_hex(model_digest(ctx.config, features, variant, split) + ":" +
                                 std::string(to_string(protocol)));
  return ctx.stage_dir(features.data.pair, "eval") / (short_digest(digest) + ".json");
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads. The first failure,
/// by index, is rethrown once every worker has finished.
template <typename Fn>
void for_each_index(std::size_t n, int jobs, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

std::vector<PairStats> cmd_stats(const RunConfig& config, std::ostream& out) {
  check_inputs(config, false);
  std::vector<PairStats> rows;
  for (const auto& pair : config.pairs) {
    const auto bars = load_bars(config, pair, nullptr);
    std::vector<double> closes;
    closes.reserve(bars.size());
    for (const auto& b : bars) closes.push_back(b.close);
    rows.push_back({pair, closes.size(), price_stats(closes)});
  }

  std::string csv = "pair,observations,max,min,mean,stdev\n";
  out << "Pair       N        Max        Min       Mean      Stdev\n";
  for (const auto& r : rows) {
    csv += r.pair + "," + std::to_string(r.observations) + "," + format_double(r.stats.max) + "," +
           format_double(r.stats.min) + "," + format_double(r.stats.mean) + "," + format_double(r.stats.stdev) + "\n";
    char line[160];
    std::snprintf(line, sizeof line, "%-6s %5zu %10.4f %10.4f %10.4f %10.4f\n", r.pair.c_str(), r.observations,
                  r.stats.max, r.stats.min, r.stats.mean, r.stats.stdev);
    out << line;
  }
  const auto path = config.workdir / "reports" / "stats.csv";
  write_file(path, csv);
  out << "written " << path.string() << "\n";
  return rows;
}

ExplainSummary cmd_explain(const RunConfig& config, std::ostream& out, int jobs) {
  const Context ctx(config, true);
  auto backend = make_backend(ctx);
  CountingBackend counting(*backend);
  fs::path cache_path = config.backend.cache_file;
  if (cache_path.is_relative()) cache_path = config.workdir / cache_path;
  fs::create_directories(cache_path.parent_path());
  ResponseCache cache(cache_path.string());
  const auto req = request_template(config);
  const auto key = backend_key(ctx);

  struct PairOutcome {
    std::vector<ExplanationRecord> records;
    fs::path path;
  };
  std::vector<PairOutcome> outcomes(config.pairs.size());
  for_each_index(config.pairs.size(), jobs, [&](std::size_t i) {
    const auto in = ctx.inputs(config.pairs[i]);
    auto& o = outcomes[i];
    o.path = explain_path(ctx, in);
    std::string body;
    for (const auto& item : in.news) {
      const Narrative narrative(item.text);
      const auto outcome = llm_sentiment_xplain(
          ctx.lexicon, narrative,
          [&](const std::string& prompt_text) {
            LlmRequest r = req;
            r.prompt = prompt_text;
            return cached_complete(cache, counting, r);
          },
          config.explain);
      o.records.push_back(make_record(outcome, item.id, format_date(item.date), item.pair, key));
      body += to_jsonl(o.records.back());
      body += '\n';
    }
    write_file(o.path, body);
  });

  ExplainSummary s;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    std::size_t ok = 0;
    for (const auto& r : outcomes[i].records) {
      ++s.items;
      ++s.attempts_histogram[r.attempts];
      if (r.sufficient) {
        ++ok;
      } else {
        ++s.failed;
      }
    }
    s.sufficient += ok;
    s.outputs.push_back(outcomes[i].path);
    out << config.pairs[i] << ": " << outcomes[i].records.size() << " items, " << ok << " explained -> "
        << outcomes[i].path.string() << "\n";
  }
  s.backend_calls = counting.calls();
  out << "sufficient: " << s.sufficient << ", failed: " << s.failed << ", attempts:";
  for (const auto& [attempts, count] : s.attempts_histogram) out << " " << attempts << "=" << count;
  out << ", backend calls: " << s.backend_calls << "\n";
  return s;
}

std::vector<fs::path> cmd_enrich(const RunConfig& config, Variant variant, std::ostream& out, int jobs) {
  const Context ctx(config, true);
  std::vector<fs::path> paths(config.pairs.size());
  for_each_index(config.pairs.size(), jobs, [&](std::size_t i) {
    const auto in = ctx.inputs(config.pairs[i]);
    const bool with_expl = variant == Variant::SentimentsExplanations ||
                           (variant != Variant::Baseline && fs::exists(explain_path(ctx, in)));
    paths[i] = build_features(ctx, in, with_expl).path;
  });
  for (std::size_t i = 0; i < paths.size(); ++i) out << config.pairs[i] << ": " << paths[i].string() << "\n";
  return paths;
}

std::vector<fs::path> cmd_train(const RunConfig& config, Variant variant, Protocol protocol, std::ostream& out,
                                int jobs) {
  const Context ctx(config, variant != Variant::Baseline);
  const auto splits = protocol_splits(config, protocol);
  std::vector<std::vector<fs::path>> per_pair(config.pairs.size());
  std::vector<std::ostringstream> logs(config.pairs.size());
  for_each_index(config.pairs.size(), jobs, [&](std::size_t i) {
    const auto in = ctx.inputs(config.pairs[i]);
    const auto features = build_features(ctx, in, variant == Variant::SentimentsExplanations);
    for (const auto& sp : splits) {
      const auto prepared = prepare_split(features.data, variant, sp);
      trained_model(ctx, features, variant, sp, prepared, &logs[i]);
      per_pair[i].push_back(ctx.stage_dir(in.pair, "model") /
                            (short_digest(model_digest(config, features, variant, sp)) + ".json"));
    }
  });
  std::vector<fs::path> all;
  for (std::size_t i = 0; i < per_pair.size(); ++i) {
    out << logs[i].str();
    for (const auto& p : per_pair[i]) {
      out << config.pairs[i] << ": " << p.string() << "\n";
      all.push_back(p);
    }
  }
  return all;
}

RunOutputs cmd_run(const RunConfig& config, Variant variant, Protocol protocol, std::ostream& out, int jobs) {
  const Context ctx(config, variant != Variant::Baseline);
  const auto splits = protocol_splits(config, protocol);
  std::vector<std::vector<ExperimentResult>> per_pair(config.pairs.size());
  std::vector<std::ostringstream> logs(config.pairs.size());
  for_each_index(config.pairs.size(), jobs, [&](std::size_t i) {
    const auto in = ctx.inputs(config.pairs[i]);
    auto features = build_features(ctx, in, variant == Variant::SentimentsExplanations);
    features.data.provenance["config"] = short_digest(config.digest());
    for (const auto& sp : splits) {
      const auto prepared = prepare_split(features.data, variant, sp);
      const auto params = trained_model(ctx, features, variant, sp, prepared, &logs[i]);
      auto result = score(features.data, variant, protocol, sp, config.train, predict_test(prepared, params));
      write_file(eval_path(ctx, features, variant, sp, protocol), result_to_json(result) + "\n");
      per_pair[i].push_back(std::move(result));
    }
  });

  RunOutputs outputs;
  for (std::size_t i = 0; i < per_pair.size(); ++i) {
    out << logs[i].str();
    for (auto& r : per_pair[i]) outputs.results.push_back(std::move(r));
  }
  const auto report = render_report(outputs.results, {config.digest(), config.average_exclude});
  const auto stem = std::string(to_string(protocol)) + "-" +
                    (variant == Variant::SentimentsExplanations ? std::string("explanations")
                                                                : std::string(to_string(variant)));
  outputs.csv = config.workdir / "reports" / (stem + ".csv");
  outputs.markdown = config.workdir / "reports" / (stem + ".md");
  write_file(outputs.csv, report.csv);
  write_file(outputs.markdown, report.markdown);
  for (const auto& r : outputs.results) {
    out << r.pair << " " << to_string(r.variant) << " " << r.split << ":";
    if (r.accuracy) out << " accuracy=" << fixed(100.0 * *r.accuracy, 2) << "%";
    if (r.mse) out << " mse=" << format_double(*r.mse);
    if (r.mae) out << " mae=" << format_double(*r.mae);
    if (r.mape) out << " mape=" << fixed(*r.mape, 3) << "%";
    for (const auto& w : r.warnings) out << " [" << w << "]";
    out << "\n";
  }
  out << "report: " << outputs.csv.string() << ", " << outputs.markdown.string() << "\n";
  return outputs;
}

RunOutputs cmd_report(const RunConfig& config, Protocol protocol, std::ostream& out) {
  const Context ctx(config, false);
  RunOutputs outputs;
  const auto splits = protocol_splits(config, protocol);
  for (const auto variant : {Variant::Baseline, Variant::Sentiments, Variant::SentimentsExplanations}) {
    if (variant != Variant::Baseline && !ctx.has_news) continue;
    for (const auto& pair : config.pairs) {
      const auto in = ctx.inputs(pair);
      std::optional<FeatureSet> features;
      try {
        features = build_features(ctx, in, variant == Variant::SentimentsExplanations);
      } catch (const MissingArtifactError&) {
        continue;
      }
      for (const auto& sp : splits) {
        const auto path = eval_path(ctx, *features, variant, sp, protocol);
        if (!fs::exists(path)) continue;
        std::ifstream f(path, std::ios::binary);
        std::ostringstream ss;
        ss << f.rdbuf();
        outputs.results.push_back(result_from_json(ss.str()));
      }
    }
  }
  if (outputs.results.empty()) {
    throw MissingArtifactError("no evaluations for the " + std::string(to_string(protocol)) +
                               " protocol; run `fxplain run --protocol " + std::string(to_string(protocol)) +
                               "` first");
  }
  const auto report = render_report(outputs.results, {config.digest(), config.average_exclude});
  outputs.csv = config.workdir / "reports" / (std::string(to_string(protocol)) + ".csv");
  outputs.markdown = config.workdir / "reports" / (std::string(to_string(protocol)) + ".md");
  write_file(outputs.csv, report.csv);
  write_file(outputs.markdown, report.markdown);
  out << report.markdown;
  out << "report: " << outputs.csv.string() << ", " << outputs.markdown.string() << "\n";
  return outputs;
}

}  // namespace fxplain::pipeline
