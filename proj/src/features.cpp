#include "fxplain/features.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "fxplain/errors.hpp"
#include "fxplain/hashing.hpp"

namespace fxplain {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Uniform in (0, 1].
double unit_interval(std::uint64_t& state) {
  return (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
}

constexpr double kConstantFeatureStdev = 1e-12;

}  // namespace

HashEmbedding::HashEmbedding(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) throw ConfigError("embedding dimension must be positive");
}

std::vector<double> HashEmbedding::embed(std::string_view term) const {
  const auto digest = sha256(std::to_string(seed_) + '\x1f' + std::string(term));
  std::uint64_t state = 0;
  for (int i = 0; i < 8; ++i) state = (state << 8) | digest[i];

  // Gaussian components give directions uniform on the sphere.
  std::vector<double> v(dimension_);
  for (std::size_t i = 0; i < dimension_; i += 2) {
    const double r = std::sqrt(-2.0 * std::log(unit_interval(state)));
    const double theta = 2.0 * std::numbers::pi * unit_interval(state);
    v[i] = r * std::cos(theta);
    if (i + 1 < dimension_) v[i + 1] = r * std::sin(theta);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

std::string HashEmbedding::id() const {
  return "hash:" + std::to_string(dimension_) + ":" + std::to_string(seed_);
}

SentimentFractions sentiment_fractions(std::span<const SentimentLabel> day_news) {
  SentimentFractions f;
  if (day_news.empty()) return f;
  for (auto label : day_news) {
    switch (label) {
      case SentimentLabel::Positive: f.positive += 1.0; break;
      case SentimentLabel::Neutral: f.neutral += 1.0; break;
      case SentimentLabel::Negative: f.negative += 1.0; break;
    }
  }
  const double n = static_cast<double>(day_news.size());
  f.positive /= n;
  f.neutral /= n;
  f.negative /= n;
  return f;
}

std::vector<double> daily_embedding_average(const EmbeddingProvider& provider,
                                            std::span<const Explanation> day_explanations) {
  std::vector<double> sum(provider.dimension(), 0.0);
  std::size_t count = 0;
  for (const auto& e : day_explanations) {
    if (!e.sufficient) continue;
    for (const auto& term : e.terms) {
      const auto v = provider.embed(term);
      if (v.size() != sum.size()) throw ShapeError("embedding provider returned a vector of the wrong length");
      for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
      ++count;
    }
  }
  if (count > 0) {
    for (double& x : sum) x /= static_cast<double>(count);
  }
  return sum;
}

std::string_view to_string(Variant variant) noexcept {
  switch (variant) {
    case Variant::Baseline: return "baseline";
    case Variant::Sentiments: return "sentiments";
    case Variant::SentimentsExplanations: return "sentiments+explanations";
  }
  return "baseline";
}

std::optional<Variant> parse_variant(std::string_view text) noexcept {
  if (text == "baseline") return Variant::Baseline;
  if (text == "sentiments") return Variant::Sentiments;
  if (text == "explanations" || text == "sentiments+explanations") return Variant::SentimentsExplanations;
  return std::nullopt;
}

std::size_t input_dimension(Variant variant, std::size_t embedding_dimension) noexcept {
  switch (variant) {
    case Variant::Baseline: return 1;
    case Variant::Sentiments: return 4;
    case Variant::SentimentsExplanations: return 4 + embedding_dimension;
  }
  return 1;
}

std::vector<Window> build_windows(std::span<const DailyFeatures> days, Variant variant) {
  for (std::size_t i = 1; i < days.size(); ++i) {
    if (std::chrono::sys_days(days[i].date) <= std::chrono::sys_days(days[i - 1].date)) {
      throw std::invalid_argument("build_windows: days are not in strictly ascending date order");
    }
  }
  std::vector<Window> windows;
  if (days.size() < kLookback + 1) return windows;

  const std::size_t embed_dim = days.front().term_embedding.size();
  auto project = [&](const DailyFeatures& d) {
    std::vector<double> row{d.close};
    if (variant == Variant::Baseline) return row;
    row.insert(row.end(), {d.pct_pos, d.pct_neu, d.pct_neg});
    if (variant == Variant::Sentiments) return row;
    if (d.term_embedding.size() != embed_dim) throw ShapeError("inconsistent embedding length across days");
    row.insert(row.end(), d.term_embedding.begin(), d.term_embedding.end());
    return row;
  };

  windows.reserve(days.size() - kLookback);
  for (std::size_t start = 0; start + kLookback < days.size(); ++start) {
    Window w;
    w.inputs.reserve(kLookback);
    for (std::size_t j = 0; j < kLookback; ++j) {
      w.inputs.push_back(project(days[start + j]));
      w.dates[j] = days[start + j].date;
    }
    w.target = days[start + kLookback].close;
    w.last_close = days[start + kLookback - 1].close;
    w.dates[kLookback] = days[start + kLookback].date;
    windows.push_back(std::move(w));
  }
  return windows;
}

NormStats fit_normalizer(std::span<const Window> train_windows) {
  if (train_windows.empty()) throw std::invalid_argument("fit_normalizer: no training windows");
  const std::size_t dim = train_windows.front().inputs.front().size();
  NormStats stats;
  stats.mean.assign(dim, 0.0);
  stats.stdev.assign(dim, 0.0);
  std::size_t n = 0;
  for (const auto& w : train_windows) {
    for (const auto& row : w.inputs) {
      if (row.size() != dim) throw ShapeError("fit_normalizer: inconsistent feature dimension");
      for (std::size_t f = 0; f < dim; ++f) stats.mean[f] += row[f];
      ++n;
    }
  }
  for (double& m : stats.mean) m /= static_cast<double>(n);
  for (const auto& w : train_windows) {
    for (const auto& row : w.inputs) {
      for (std::size_t f = 0; f < dim; ++f) stats.stdev[f] += (row[f] - stats.mean[f]) * (row[f] - stats.mean[f]);
    }
  }
  for (double& s : stats.stdev) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > kConstantFeatureStdev)) s = 1.0;
  }
  return stats;
}

Window apply(const NormStats& stats, const Window& window) {
  Window out = window;
  for (auto& row : out.inputs) {
    if (row.size() != stats.mean.size()) throw ShapeError("window dimension does not match normalizer");
    for (std::size_t f = 0; f < row.size(); ++f) row[f] = stats.apply(f, row[f]);
  }
  out.target = stats.apply_target(window.target);
  out.last_close = stats.apply_target(window.last_close);
  return out;
}

Window invert(const NormStats& stats, const Window& normalized) {
  Window out = normalized;
  for (auto& row : out.inputs) {
    if (row.size() != stats.mean.size()) throw ShapeError("window dimension does not match normalizer");
    for (std::size_t f = 0; f < row.size(); ++f) row[f] = stats.invert(f, row[f]);
  }
  out.target = stats.invert_target(normalized.target);
  out.last_close = stats.invert_target(normalized.last_close);
  return out;
}

DailyFeatures make_daily_features(const DayInputs& inputs, const EmbeddingProvider& provider) {
  DailyFeatures f;
  f.date = inputs.day->date;
  f.close = inputs.day->close;
  const auto fractions = sentiment_fractions(inputs.labels);
  f.pct_pos = fractions.positive;
  f.pct_neu = fractions.neutral;
  f.pct_neg = fractions.negative;
  f.term_embedding = daily_embedding_average(provider, inputs.explanations);
  return f;
}

std::string features_to_csv(std::span<const DailyFeatures> days) {
  std::string out = "date,close,pct_pos,pct_neu,pct_neg";
  const std::size_t dim = days.empty() ? 0 : days.front().term_embedding.size();
  for (std::size_t i = 0; i < dim; ++i) out += ",e_" + std::to_string(i);
  out += '\n';
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += ',';
    out += buf;
  };
  for (const auto& d : days) {
    out += format_date(d.date);
    num(d.close);
    num(d.pct_pos);
    num(d.pct_neu);
    num(d.pct_neg);
    for (double x : d.term_embedding) num(x);
    out += '\n';
  }
  return out;
}

}  // namespace fxplain
